#include "kloc/robust.hpp"

#include <cmath>
#include <limits>

#include "kloc/rng.hpp"

namespace kloc {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kNoFilter:
      return "none";
    case Strategy::kMaskFilter:
      return "mask";
    case Strategy::kRigidRansac:
      return "rigid-ransac";
    case Strategy::kPnpRansac:
      return "pnp-ransac";
    case Strategy::kWeighted:
      return "weighted";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "none") return Strategy::kNoFilter;
  if (name == "mask") return Strategy::kMaskFilter;
  if (name == "rigid-ransac") return Strategy::kRigidRansac;
  if (name == "pnp-ransac") return Strategy::kPnpRansac;
  if (name == "weighted") return Strategy::kWeighted;
  throw Error(ErrorCode::kUsage, "unknown strategy: " + name);
}

void RansacConfig::validate(bool pnp) const {
  if (max_iterations < 1 || !(inlier_threshold > 0.0) ||
      sample_size < (pnp ? 4 : 3)) {
    throw Error(ErrorCode::kInvalidConfig, "invalid RANSAC configuration");
  }
}

namespace {

SolveReport kabsch_report(const Mat3X& camera, const Mat3X& global,
                          const VecX& weights, Strategy strategy,
                          Eigen::Index inliers) {
  auto [pose, trace] = weighted_kabsch(camera, global, weights);
  SolveReport report;
  report.pose = pose;
  report.strategy = strategy;
  report.inlier_count = inliers;
  report.iterations_used = 0;
  report.cost = trace.cost;
  return report;
}

}  // namespace

SolveReport solve_no_filter(const CorrespondenceSet& c) {
  c.validate();
  return kabsch_report(c.camera_points.points, c.global_points.points,
                       VecX::Ones(c.count()), Strategy::kNoFilter, c.count());
}

SolveReport solve_mask_filter(const CorrespondenceSet& c,
                              const std::vector<std::string>& labels,
                              const std::set<std::string>& excluded) {
  c.validate();
  if (static_cast<Eigen::Index>(labels.size()) != c.count()) {
    throw Error(ErrorCode::kShapeMismatch, "labels length != correspondences");
  }
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<size_t>(c.count()));
  for (Eigen::Index i = 0; i < c.count(); ++i) {
    if (!excluded.count(labels[static_cast<size_t>(i)])) keep.push_back(i);
  }
  if (static_cast<Eigen::Index>(keep.size()) < 3) {
    throw Error(ErrorCode::kInsufficientPoints,
                "mask filter left fewer than 3 points");
  }
  Mat3X camera(3, keep.size()), global(3, keep.size());
  for (size_t j = 0; j < keep.size(); ++j) {
    camera.col(static_cast<Eigen::Index>(j)) = c.camera_points.points.col(keep[j]);
    global.col(static_cast<Eigen::Index>(j)) = c.global_points.points.col(keep[j]);
  }
  SolveReport report =
      kabsch_report(camera, global, VecX::Ones(static_cast<Eigen::Index>(keep.size())),
                    Strategy::kMaskFilter, static_cast<Eigen::Index>(keep.size()));
  return report;
}

SolveReport solve_weighted(const CorrespondenceSet& c) {
  c.validate();
  SolveReport report =
      kabsch_report(c.camera_points.points, c.global_points.points, c.weights,
                    Strategy::kWeighted, c.count());
  return report;
}

SolveReport solve_rigid_ransac(const CorrespondenceSet& c,
                               const RansacConfig& cfg) {
  c.validate();
  cfg.validate(false);
  const Eigen::Index m = c.count();
  if (m < cfg.sample_size) {
    throw Error(ErrorCode::kInsufficientPoints,
                "fewer correspondences than the RANSAC sample size");
  }
  const Mat3X& cam = c.camera_points.points;
  const Mat3X& glo = c.global_points.points;

  // Winner by (inlier_count, -cost, hypothesis index); evaluating hypotheses
  // in index order with strict replacement realizes the index tie-break.
  Eigen::Index best_inliers = -1;
  double best_cost = std::numeric_limits<double>::max();
  std::vector<Eigen::Index> best_set;

  Mat3X sample_cam(3, cfg.sample_size), sample_glo(3, cfg.sample_size);
  const VecX unit = VecX::Ones(cfg.sample_size);
  std::vector<Eigen::Index> inlier_set;
  int iterations = 0;
  for (int h = 0; h < cfg.max_iterations; ++h) {
    ++iterations;
    Rng rng = Rng::fork(cfg.seed, static_cast<uint64_t>(h));
    const auto idx = sample_distinct(rng, static_cast<int>(m), cfg.sample_size);
    for (int j = 0; j < cfg.sample_size; ++j) {
      sample_cam.col(j) = cam.col(idx[static_cast<size_t>(j)]);
      sample_glo.col(j) = glo.col(idx[static_cast<size_t>(j)]);
    }
    Pose pose;
    try {
      pose = weighted_kabsch(sample_cam, sample_glo, unit).first;
    } catch (const Error&) {
      continue;  // degenerate minimal sample
    }
    inlier_set.clear();
    double cost = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double r2 = (glo.col(i) - pose.apply(cam.col(i))).squaredNorm();
      if (r2 < cfg.inlier_threshold * cfg.inlier_threshold) {
        inlier_set.push_back(i);
        cost += r2;
      }
    }
    const Eigen::Index n_in = static_cast<Eigen::Index>(inlier_set.size());
    if (n_in > best_inliers || (n_in == best_inliers && cost < best_cost)) {
      best_inliers = n_in;
      best_cost = cost;
      best_set = inlier_set;
    }
    if (cfg.early_exit &&
        best_inliers > static_cast<Eigen::Index>(0.95 * static_cast<double>(m))) {
      break;
    }
  }
  if (best_inliers < cfg.sample_size) {
    throw Error(ErrorCode::kNoConsensus,
                "no hypothesis reached the minimum inlier count");
  }

  Mat3X in_cam(3, best_inliers), in_glo(3, best_inliers);
  for (Eigen::Index j = 0; j < best_inliers; ++j) {
    in_cam.col(j) = cam.col(best_set[static_cast<size_t>(j)]);
    in_glo.col(j) = glo.col(best_set[static_cast<size_t>(j)]);
  }
  SolveReport report = kabsch_report(in_cam, in_glo, VecX::Ones(best_inliers),
                                     Strategy::kRigidRansac, best_inliers);
  report.iterations_used = iterations;
  return report;
}

SolveReport solve_pnp_ransac(const CorrespondenceSet& c,
                             const CameraIntrinsics& k,
                             const RansacConfig& cfg) {
  c.validate();
  cfg.validate(true);
  const Eigen::Index m = c.count();
  if (m < cfg.sample_size) {
    throw Error(ErrorCode::kInsufficientPoints,
                "fewer correspondences than the PnP sample size");
  }
  const Mat3X& glo = c.global_points.points;
  const Mat2X pixels = c.pixels.pixels.topRows<2>();

  auto reprojection_sq = [&](const Pose& pose, Eigen::Index i,
                             const Pose& inv_pose) {
    const Vec3 x = inv_pose.apply(glo.col(i));
    (void)pose;
    if (x.z() <= kBehindCameraEps) return std::numeric_limits<double>::max();
    const double du = k.fx * x.x() / x.z() + k.cx - pixels(0, i);
    const double dv = k.fy * x.y() / x.z() + k.cy - pixels(1, i);
    return du * du + dv * dv;
  };

  Eigen::Index best_inliers = -1;
  double best_cost = std::numeric_limits<double>::max();
  Pose best_pose;
  std::vector<Eigen::Index> best_set;
  std::vector<Eigen::Index> inlier_set;
  int iterations = 0;
  const double thresh_sq = cfg.inlier_threshold * cfg.inlier_threshold;

  for (int h = 0; h < cfg.max_iterations; ++h) {
    ++iterations;
    Rng rng = Rng::fork(cfg.seed, static_cast<uint64_t>(h));
    const auto idx = sample_distinct(rng, static_cast<int>(m), cfg.sample_size);
    std::array<Vec3, 3> world_pts;
    std::array<Vec3, 3> bearings;
    for (int j = 0; j < 3; ++j) {
      const Eigen::Index i = idx[static_cast<size_t>(j)];
      world_pts[static_cast<size_t>(j)] = glo.col(i);
      bearings[static_cast<size_t>(j)] = k.ray(pixels(0, i), pixels(1, i)).normalized();
    }
    const auto candidates = solve_p3p(world_pts, bearings);
    if (candidates.empty()) continue;  // degenerate sample; keep going

    // Remaining sample points (4th and beyond) disambiguate.
    const Pose* chosen = nullptr;
    double chosen_err = std::numeric_limits<double>::max();
    for (const Pose& cand : candidates) {
      const Pose inv_cand = invert(cand);
      double err = 0.0;
      for (int j = 3; j < cfg.sample_size; ++j) {
        const double e = reprojection_sq(cand, idx[static_cast<size_t>(j)], inv_cand);
        err = e == std::numeric_limits<double>::max() ? e : err + e;
        if (err == std::numeric_limits<double>::max()) break;
      }
      if (err < chosen_err) {
        chosen_err = err;
        chosen = &cand;
      }
    }
    if (!chosen) continue;

    const Pose inv_pose = invert(*chosen);
    inlier_set.clear();
    double cost = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double e = reprojection_sq(*chosen, i, inv_pose);
      if (e < thresh_sq) {
        inlier_set.push_back(i);
        cost += e;
      }
    }
    const Eigen::Index n_in = static_cast<Eigen::Index>(inlier_set.size());
    if (n_in > best_inliers || (n_in == best_inliers && cost < best_cost)) {
      best_inliers = n_in;
      best_cost = cost;
      best_pose = *chosen;
      best_set = inlier_set;
    }
    if (cfg.early_exit &&
        best_inliers > static_cast<Eigen::Index>(0.95 * static_cast<double>(m))) {
      break;
    }
  }
  if (best_inliers < cfg.sample_size) {
    throw Error(ErrorCode::kNoConsensus,
                "no PnP hypothesis reached the minimum inlier count");
  }

  Mat3X in_world(3, best_inliers);
  Mat2X in_pixels(2, best_inliers);
  for (Eigen::Index j = 0; j < best_inliers; ++j) {
    in_world.col(j) = glo.col(best_set[static_cast<size_t>(j)]);
    in_pixels.col(j) = pixels.col(best_set[static_cast<size_t>(j)]);
  }
  const Pose refined = refine_pnp(best_pose, in_world, in_pixels, k);

  SolveReport report;
  report.pose = refined;
  report.strategy = Strategy::kPnpRansac;
  report.inlier_count = best_inliers;
  report.iterations_used = iterations;
  const Pose inv_refined = invert(refined);
  report.cost = 0.0;
  for (Eigen::Index j = 0; j < best_inliers; ++j) {
    const double e =
        reprojection_sq(refined, best_set[static_cast<size_t>(j)], inv_refined);
    if (e != std::numeric_limits<double>::max()) report.cost += e;
  }
  return report;
}

SolveReport solve(Strategy strategy, const CorrespondenceSet& c,
                  const std::vector<std::string>& labels,
                  const std::set<std::string>& excluded,
                  const CameraIntrinsics& k, const RansacConfig& cfg) {
  switch (strategy) {
    case Strategy::kNoFilter:
      return solve_no_filter(c);
    case Strategy::kMaskFilter:
      return solve_mask_filter(c, labels, excluded);
    case Strategy::kRigidRansac:
      return solve_rigid_ransac(c, cfg);
    case Strategy::kPnpRansac:
      return solve_pnp_ransac(c, k, cfg);
    case Strategy::kWeighted:
      return solve_weighted(c);
  }
  throw Error(ErrorCode::kUsage, "unknown strategy");
}

}  // namespace kloc
