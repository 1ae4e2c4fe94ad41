#pragma once

#include <array>
#include <set>
#include <string>
#include <vector>

#include "kloc/alignment.hpp"

namespace kloc {

enum class Strategy { kNoFilter, kMaskFilter, kRigidRansac, kPnpRansac, kWeighted };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct RansacConfig {
  int max_iterations = 2000;
  double inlier_threshold = 0.10;  // meters (rigid) or pixels (PnP)
  int sample_size = 10;            // 10 for rigid, 4 for PnP
  uint64_t seed = 0;
  bool early_exit = false;  // optional stop once inlier ratio exceeds 95%

  static RansacConfig rigid_default() { return RansacConfig{}; }
  static RansacConfig pnp_default() {
    RansacConfig cfg;
    cfg.inlier_threshold = 10.0;  // pixels
    cfg.sample_size = 4;
    return cfg;
  }

  void validate(bool pnp) const;
};

struct SolveReport {
  Pose pose;
  Strategy strategy = Strategy::kNoFilter;
  Eigen::Index inlier_count = 0;
  int iterations_used = 0;
  double cost = 0.0;  // weighted squared alignment cost, or inlier-set cost
};

// Unit-weight Kabsch over everything.
SolveReport solve_no_filter(const CorrespondenceSet& c);

// Unit-weight Kabsch over points whose label is not excluded. With an empty
// exclusion set this is bit-for-bit solve_no_filter.
SolveReport solve_mask_filter(const CorrespondenceSet& c,
                              const std::vector<std::string>& labels,
                              const std::set<std::string>& excluded);

// Hypothesize-and-verify on 3D-3D residuals; winner by
// (inlier_count, -cost, hypothesis index), refit on its inliers.
SolveReport solve_rigid_ransac(const CorrespondenceSet& c,
                               const RansacConfig& cfg);

// Minimal P3P hypotheses from 2D-3D correspondences, fourth sample point
// disambiguates; inliers by reprojection distance, refit by damped least
// squares on the inlier set.
SolveReport solve_pnp_ransac(const CorrespondenceSet& c,
                             const CameraIntrinsics& k,
                             const RansacConfig& cfg);

// Kabsch with the predicted weights as given.
SolveReport solve_weighted(const CorrespondenceSet& c);

SolveReport solve(Strategy strategy, const CorrespondenceSet& c,
                  const std::vector<std::string>& labels,
                  const std::set<std::string>& excluded,
                  const CameraIntrinsics& k, const RansacConfig& cfg);

// --- minimal PnP machinery (exposed for tests) ---

// Candidate camera->global poses fitting three 2D-3D correspondences.
// Bearings are unit camera-frame rays. Degenerate configurations
// (collinear points, coincident bearings) yield an empty set.
std::vector<Pose> solve_p3p(const std::array<Vec3, 3>& world_points,
                            const std::array<Vec3, 3>& bearings);

// Damped least-squares refinement of a camera->global pose on reprojection
// error over the given correspondences. Returns the refined pose; never
// increases the total squared reprojection error.
Pose refine_pnp(const Pose& initial, const Mat3X& world_points,
                const Mat2X& pixels, const CameraIntrinsics& k,
                int max_iterations = 50);

}  // namespace kloc
