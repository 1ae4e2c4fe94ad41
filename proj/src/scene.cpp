#include "kloc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kloc/rng.hpp"

namespace kloc {

void SceneModel::recompute_extent() {
  if (landmarks.empty()) {
    extent_min = extent_max = Vec3::Zero();
    return;
  }
  extent_min = extent_max = landmarks.front().position;
  for (const auto& lm : landmarks) {
    extent_min = extent_min.cwiseMin(lm.position);
    extent_max = extent_max.cwiseMax(lm.position);
  }
}

void SceneModel::validate() const {
  for (size_t i = 0; i < landmarks.size(); ++i) {
    if (landmarks[i].id != static_cast<int>(i)) {
      throw Error(ErrorCode::kInvalidConfig, "landmark ids must be 0..n-1");
    }
    if (landmarks[i].descriptor.size() != kDescriptorDim) {
      throw Error(ErrorCode::kInvalidConfig, "bad descriptor dimension");
    }
  }
}

LabelMix default_label_mix() {
  return {{"static", 0.8}, {"dynamic", 0.1}, {"clutter", 0.1}};
}

SceneModel generate_scene(int n_landmarks, const Vec3& extent_min,
                          const Vec3& extent_max, const LabelMix& label_mix,
                          uint64_t seed) {
  if (n_landmarks < 1) {
    throw Error(ErrorCode::kInvalidConfig, "need at least one landmark");
  }
  if (label_mix.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "label mix must not be empty");
  }
  double mix_total = 0.0;
  for (const auto& [label, w] : label_mix) mix_total += w;
  if (!(mix_total > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "label mix weights must sum > 0");
  }

  Rng rng(seed);
  SceneModel scene;
  scene.landmarks.reserve(static_cast<size_t>(n_landmarks));
  for (int i = 0; i < n_landmarks; ++i) {
    Landmark lm;
    lm.id = i;
    for (int a = 0; a < 3; ++a) {
      lm.position[a] = rng.uniform(extent_min[a], extent_max[a]);
    }
    const double pick = rng.uniform() * mix_total;
    double acc = 0.0;
    lm.label = label_mix.back().first;
    for (const auto& [label, w] : label_mix) {
      acc += w;
      if (pick < acc) {
        lm.label = label;
        break;
      }
    }
    lm.descriptor.resize(kDescriptorDim);
    for (;;) {
      for (int a = 0; a < kDescriptorDim; ++a) lm.descriptor[a] = rng.normal();
      const double n = lm.descriptor.norm();
      if (n > 1e-9) {
        lm.descriptor /= n;
        break;
      }
    }
    scene.landmarks.push_back(std::move(lm));
  }
  scene.recompute_extent();
  return scene;
}

CameraIntrinsics default_intrinsics(int width, int height) {
  return CameraIntrinsics(static_cast<double>(width),
                          static_cast<double>(width),
                          0.5 * (width - 1), 0.5 * (height - 1));
}

namespace {

// Camera->global rotation looking from `eye` toward `target`, +z forward,
// +y pointing down in the world (image rows grow downward).
Mat3 look_at_rotation(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 up(0.0, 0.0, 1.0);
  if (std::abs(forward.dot(up)) > 0.999) up = Vec3(0.0, 1.0, 0.0);
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return r;
}

double visible_fraction(const SceneModel& scene, const Pose& pose,
                        const CameraIntrinsics& k, int w, int h, double d_min,
                        double d_max) {
  const Pose inv = invert(pose);
  int visible = 0;
  for (const auto& lm : scene.landmarks) {
    const Vec3 x = inv.apply(lm.position);
    if (x.z() < d_min || x.z() > d_max) continue;
    const double u = k.fx * x.x() / x.z() + k.cx;
    const double v = k.fy * x.y() / x.z() + k.cy;
    if (u >= 0.0 && u < w && v >= 0.0 && v < h) ++visible;
  }
  return static_cast<double>(visible) /
         static_cast<double>(scene.landmarks.size());
}

double fit_distance(const SceneModel& scene, const CameraIntrinsics& k, int w,
                    int h) {
  const double half_diag = 0.5 * scene.extent_diagonal();
  const double tan_half_h = 0.5 * static_cast<double>(w) / k.fx;
  const double tan_half_v = 0.5 * static_cast<double>(h) / k.fy;
  const double tan_min = std::min(tan_half_h, tan_half_v);
  return half_diag / tan_min * 1.15 + half_diag;
}

}  // namespace

std::vector<Frame> generate_trajectory(const SceneModel& scene, int n_frames,
                                       TrajectoryMode mode, uint64_t seed,
                                       const CameraIntrinsics& k, int grid_w,
                                       int grid_h, double d_min, double d_max,
                                       double min_visible_frac) {
  if (n_frames < 1) {
    throw Error(ErrorCode::kInvalidConfig, "need at least one frame");
  }
  const Vec3 center = scene.extent_center();
  const double dist = fit_distance(scene, k, grid_w, grid_h);
  const PixelGrid grid = PixelGrid::full(grid_w, grid_h);

  std::vector<Frame> frames;
  frames.reserve(static_cast<size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) {
    Frame frame;
    frame.id = i;
    frame.intrinsics = k;
    frame.grid = grid;

    bool ok = false;
    const int retries = mode == TrajectoryMode::kOrbit ? 1 : 100;
    Rng rng = Rng::fork(seed, static_cast<uint64_t>(i));
    for (int attempt = 0; attempt < retries && !ok; ++attempt) {
      Vec3 eye;
      Vec3 target = center;
      if (mode == TrajectoryMode::kOrbit) {
        const double theta =
            2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n_frames);
        const Vec3 dir =
            Vec3(std::cos(theta), std::sin(theta), 0.25).normalized();
        eye = center + dist * dir;
      } else {
        const double theta = rng.uniform(0.0, 2.0 * M_PI);
        const double elev = rng.uniform(0.05, 0.5);
        const Vec3 dir = Vec3(std::cos(theta), std::sin(theta), elev).normalized();
        eye = center + dist * rng.uniform(1.0, 1.25) * dir;
        const double jitter = 0.1 * scene.extent_diagonal();
        for (int a = 0; a < 3; ++a)
          target[a] += rng.uniform(-jitter, jitter);
      }
      frame.pose_gt.rotation = look_at_rotation(eye, target);
      frame.pose_gt.translation = eye;
      ok = visible_fraction(scene, frame.pose_gt, k, grid_w, grid_h, d_min,
                            d_max) >= min_visible_frac;
    }
    if (!ok) {
      throw Error(ErrorCode::kDegenerateGeometry,
                  "could not satisfy frame visibility");
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

Observation render(const SceneModel& scene, const Frame& frame,
                   const SimNoise& noise, double outlier_rate, uint64_t seed,
                   double d_min, double d_max) {
  if (outlier_rate < 0.0 || outlier_rate > 1.0 || noise.depth_sigma < 0.0 ||
      noise.pixel_sigma < 0.0 || d_min <= 0.0 || d_max <= d_min) {
    throw Error(ErrorCode::kInvalidConfig, "invalid render parameters");
  }
  const Pose inv = invert(frame.pose_gt);
  const CameraIntrinsics& k = frame.intrinsics;
  const int w = frame.grid.width;
  const int h = frame.grid.height;

  // Project every landmark once.
  const size_t n = scene.landmarks.size();
  std::vector<double> proj_u(n), proj_v(n), proj_z(n);
  std::vector<uint8_t> visible(n, 0);
  bool any_visible = false;
  for (size_t j = 0; j < n; ++j) {
    const Vec3 x = inv.apply(scene.landmarks[j].position);
    proj_z[j] = x.z();
    if (x.z() < d_min || x.z() > d_max) continue;
    proj_u[j] = k.fx * x.x() / x.z() + k.cx;
    proj_v[j] = k.fy * x.y() / x.z() + k.cy;
    if (proj_u[j] >= 0.0 && proj_u[j] < w && proj_v[j] >= 0.0 && proj_v[j] < h) {
      visible[j] = 1;
      any_visible = true;
    }
  }
  if (!any_visible) {
    throw Error(ErrorCode::kDegenerateGeometry, "frame sees no landmark");
  }

  Rng rng(seed);
  const Eigen::Index cells = frame.grid.count();
  Observation obs;
  obs.frame = frame;
  obs.pixels.width = w;
  obs.pixels.height = h;
  obs.pixels.pixels.resize(3, cells);
  obs.landmark_ids.resize(static_cast<size_t>(cells));
  obs.labels.resize(static_cast<size_t>(cells));
  obs.depths.resize(cells);
  obs.global_gt.resize(3, cells);
  obs.rays.resize(3, cells);
  obs.descriptors.resize(kDescriptorDim, cells);
  obs.outlier_mask.assign(static_cast<size_t>(cells), 0);
  obs.d_min = d_min;
  obs.d_max = d_max;

  for (Eigen::Index i = 0; i < cells; ++i) {
    const double u = frame.grid.pixels(0, i);
    const double v = frame.grid.pixels(1, i);
    // Nearest visible landmark by projected pixel distance.
    size_t best = 0;
    double best_d2 = std::numeric_limits<double>::max();
    for (size_t j = 0; j < n; ++j) {
      if (!visible[j]) continue;
      const double du = proj_u[j] - u;
      const double dv = proj_v[j] - v;
      const double d2 = du * du + dv * dv;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = j;
      }
    }

    size_t source = best;
    bool outlier = false;
    if (n > 1 && rng.uniform() < outlier_rate) {
      outlier = true;
      size_t other = static_cast<size_t>(rng.below(n - 1));
      if (other >= best) ++other;
      source = other;
    }
    const Landmark& lm = scene.landmarks[source];

    const double true_depth = outlier
                                  ? std::min(std::max(proj_z[source], d_min), d_max)
                                  : proj_z[best];
    double stored_depth = true_depth;
    if (noise.depth_sigma > 0.0) {
      stored_depth *= 1.0 + noise.depth_sigma * rng.normal();
    }
    stored_depth = std::min(std::max(stored_depth, d_min), d_max);

    double gu = u, gv = v;
    if (noise.pixel_sigma > 0.0) {
      gu += noise.pixel_sigma * rng.normal();
      gv += noise.pixel_sigma * rng.normal();
    }
    double global_depth = true_depth;
    if (noise.depth_sigma > 0.0) {
      global_depth *= 1.0 + noise.depth_sigma * rng.normal();
      global_depth = std::min(std::max(global_depth, d_min), d_max);
    }

    obs.pixels.pixels.col(i) = Vec3(u, v, 1.0);
    obs.landmark_ids[static_cast<size_t>(i)] = lm.id;
    obs.labels[static_cast<size_t>(i)] = lm.label;
    obs.depths[i] = stored_depth;
    if (outlier) {
      // Coordinates of the wrong landmark, as a mismatched feature would give.
      obs.global_gt.col(i) = lm.position;
    } else {
      obs.global_gt.col(i) = frame.pose_gt.apply(global_depth * k.ray(gu, gv));
    }
    obs.rays.col(i) = k.ray(u, v).normalized();
    obs.descriptors.col(i) = lm.descriptor;
    obs.outlier_mask[static_cast<size_t>(i)] = outlier ? 1 : 0;
  }
  return obs;
}

CorrespondenceSet to_correspondences(const Observation& obs,
                                     const PredictionMaps& predicted) {
  const Eigen::Index m = obs.count();
  if (predicted.camera_points.cols() != m ||
      predicted.global_points.cols() != m || predicted.weights.size() != m) {
    throw Error(ErrorCode::kShapeMismatch,
                "prediction maps do not match the observation");
  }
  CorrespondenceSet c;
  c.pixels = obs.pixels;
  c.camera_points = PointCloud{predicted.camera_points, FrameTag::kCamera};
  c.global_points = PointCloud{predicted.global_points, FrameTag::kGlobal};
  c.weights = predicted.weights;
  c.validate();
  return c;
}

PredictionMaps gt_prediction_maps(const Observation& obs) {
  PredictionMaps maps;
  maps.depth = obs.depths;
  maps.camera_points.resize(3, obs.count());
  for (Eigen::Index i = 0; i < obs.count(); ++i) {
    maps.camera_points.col(i) =
        obs.depths[i] * obs.frame.intrinsics.ray(obs.pixels.pixels(0, i),
                                                 obs.pixels.pixels(1, i));
  }
  maps.global_points = obs.global_gt;
  maps.weights = VecX::Ones(obs.count());
  return maps;
}

}  // namespace kloc
