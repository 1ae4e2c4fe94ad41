#include "kloc/io.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "kloc/report.hpp"

namespace kloc {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  return in;
}

void expect_header(std::istream& in, const std::string& magic,
                   const std::string& path) {
  std::string line;
  if (!std::getline(in, line) || line != magic) {
    throw Error(ErrorCode::kIo, path + ": expected header '" + magic + "'");
  }
}

}  // namespace

void save_scene(const SceneModel& scene, const std::string& path) {
  auto out = open_out(path);
  out << "KLOC-SCENE v1\n";
  for (const auto& lm : scene.landmarks) {
    out << "landmark " << lm.id << " " << fmt17(lm.position.x()) << " "
        << fmt17(lm.position.y()) << " " << fmt17(lm.position.z()) << " "
        << lm.label << "\n";
  }
  for (const auto& lm : scene.landmarks) {
    out << "descriptor " << lm.id;
    for (int a = 0; a < lm.descriptor.size(); ++a) {
      out << " " << fmt17(lm.descriptor[a]);
    }
    out << "\n";
  }
}

SceneModel load_scene(const std::string& path) {
  auto in = open_in(path);
  expect_header(in, "KLOC-SCENE v1", path);
  SceneModel scene;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "landmark") {
      Landmark lm;
      std::string x, y, z;
      ls >> lm.id >> x >> y >> z >> lm.label;
      if (!ls) throw Error(ErrorCode::kIo, path + ": bad landmark line");
      lm.position = Vec3(parse_double(x), parse_double(y), parse_double(z));
      scene.landmarks.push_back(std::move(lm));
    } else if (tag == "descriptor") {
      int id = -1;
      ls >> id;
      if (id < 0 || id >= static_cast<int>(scene.landmarks.size())) {
        throw Error(ErrorCode::kIo, path + ": descriptor for unknown landmark");
      }
      VecX d(kDescriptorDim);
      for (int a = 0; a < kDescriptorDim; ++a) {
        std::string v;
        ls >> v;
        if (!ls) throw Error(ErrorCode::kIo, path + ": short descriptor line");
        d[a] = parse_double(v);
      }
      scene.landmarks[static_cast<size_t>(id)].descriptor = std::move(d);
    } else {
      throw Error(ErrorCode::kIo, path + ": unknown record '" + tag + "'");
    }
  }
  scene.recompute_extent();
  scene.validate();
  return scene;
}

void save_trajectory(const std::vector<Frame>& frames,
                     const std::string& path) {
  auto out = open_out(path);
  out << "KLOC-TRAJ v1\n";
  for (const auto& frame : frames) {
    const PoseVec7 q = pose_to_quat(frame.pose_gt);
    out << "frame " << frame.id;
    for (double v : q) out << " " << fmt17(v);
    out << "\n";
  }
}

std::vector<Frame> load_trajectory(const std::string& path) {
  auto in = open_in(path);
  expect_header(in, "KLOC-TRAJ v1", path);
  std::vector<Frame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag != "frame") {
      throw Error(ErrorCode::kIo, path + ": unknown record '" + tag + "'");
    }
    Frame frame;
    ls >> frame.id;
    PoseVec7 q;
    for (double& v : q) {
      std::string tok;
      ls >> tok;
      if (!ls) throw Error(ErrorCode::kIo, path + ": short frame line");
      v = parse_double(tok);
    }
    frame.pose_gt = quat_to_pose(q);
    frames.push_back(std::move(frame));
  }
  return frames;
}

void save_observations(const std::vector<Observation>& observations,
                       const std::string& path) {
  auto out = open_out(path);
  out << "KLOC-OBS v1\n";
  for (const auto& obs : observations) {
    const auto& k = obs.frame.intrinsics;
    out << "frame " << obs.frame.id << " " << fmt17(k.fx) << " " << fmt17(k.fy)
        << " " << fmt17(k.cx) << " " << fmt17(k.cy) << " "
        << obs.frame.grid.width << " " << obs.frame.grid.height << " "
        << fmt17(obs.d_min) << " " << fmt17(obs.d_max) << " " << obs.count()
        << "\n";
    for (Eigen::Index i = 0; i < obs.count(); ++i) {
      out << "cell " << fmt17(obs.pixels.pixels(0, i)) << " "
          << fmt17(obs.pixels.pixels(1, i)) << " "
          << obs.landmark_ids[static_cast<size_t>(i)] << " "
          << int(obs.outlier_mask[static_cast<size_t>(i)]) << " "
          << fmt17(obs.depths[i]) << " " << fmt17(obs.global_gt(0, i)) << " "
          << fmt17(obs.global_gt(1, i)) << " " << fmt17(obs.global_gt(2, i))
          << "\n";
    }
  }
}

std::vector<Observation> load_observations(
    const std::string& path, const SceneModel& scene,
    const std::vector<Frame>& trajectory) {
  auto in = open_in(path);
  expect_header(in, "KLOC-OBS v1", path);
  std::map<int, Pose> poses;
  for (const auto& frame : trajectory) poses[frame.id] = frame.pose_gt;

  std::vector<Observation> observations;
  std::string line;
  Observation* current = nullptr;
  Eigen::Index fill = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "frame") {
      Observation obs;
      int id = 0, w = 0, h = 0;
      Eigen::Index cells = 0;
      std::string fx, fy, cx, cy, dmin, dmax;
      ls >> id >> fx >> fy >> cx >> cy >> w >> h >> dmin >> dmax >> cells;
      if (!ls) throw Error(ErrorCode::kIo, path + ": bad frame header");
      if (!poses.count(id)) {
        throw Error(ErrorCode::kIo, path + ": frame not in trajectory");
      }
      obs.frame.id = id;
      obs.frame.pose_gt = poses[id];
      obs.frame.intrinsics =
          CameraIntrinsics(parse_double(fx), parse_double(fy), parse_double(cx),
                           parse_double(cy));
      obs.frame.grid = PixelGrid::full(w, h);
      obs.d_min = parse_double(dmin);
      obs.d_max = parse_double(dmax);
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
      observations.push_back(std::move(obs));
      current = &observations.back();
      fill = 0;
    } else if (tag == "cell") {
      if (!current || fill >= current->count()) {
        throw Error(ErrorCode::kIo, path + ": stray cell line");
      }
      std::string u, v, depth, gx, gy, gz;
      int lm_id = 0, outlier = 0;
      ls >> u >> v >> lm_id >> outlier >> depth >> gx >> gy >> gz;
      if (!ls) throw Error(ErrorCode::kIo, path + ": bad cell line");
      if (lm_id < 0 || lm_id >= static_cast<int>(scene.landmarks.size())) {
        throw Error(ErrorCode::kIo, path + ": cell references unknown landmark");
      }
      const Landmark& lm = scene.landmarks[static_cast<size_t>(lm_id)];
      const Eigen::Index i = fill++;
      current->pixels.pixels.col(i) =
          Vec3(parse_double(u), parse_double(v), 1.0);
      current->landmark_ids[static_cast<size_t>(i)] = lm_id;
      current->labels[static_cast<size_t>(i)] = lm.label;
      current->depths[i] = parse_double(depth);
      current->global_gt.col(i) =
          Vec3(parse_double(gx), parse_double(gy), parse_double(gz));
      current->rays.col(i) = current->frame.intrinsics
                                 .ray(current->pixels.pixels(0, i),
                                      current->pixels.pixels(1, i))
                                 .normalized();
      current->descriptors.col(i) = lm.descriptor;
      current->outlier_mask[static_cast<size_t>(i)] =
          static_cast<uint8_t>(outlier);
    } else {
      throw Error(ErrorCode::kIo, path + ": unknown record '" + tag + "'");
    }
  }
  for (const auto& obs : observations) {
    if (obs.count() == 0) {
      throw Error(ErrorCode::kIo, path + ": frame without cells");
    }
  }
  return observations;
}

}  // namespace kloc
