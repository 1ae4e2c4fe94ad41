#pragma once

#include <utility>

#include "kloc/geometry.hpp"

namespace kloc {

// Matched pixels and predicted clouds, one correspondence per column/entry.
struct CorrespondenceSet {
  PixelGrid pixels;
  PointCloud camera_points;  // FrameTag::kCamera
  PointCloud global_points;  // FrameTag::kGlobal
  VecX weights;              // nonnegative, not all zero

  Eigen::Index count() const { return weights.size(); }
  void validate() const;
};

// Everything the solve saw, kept so the backward pass can be replayed.
struct AlignmentTrace {
  Vec3 mu_c = Vec3::Zero();
  Vec3 mu_g = Vec3::Zero();
  Mat3X c_bar;  // centered camera points, one column each
  Mat3X g_bar;  // centered global points
  Mat3 u = Mat3::Identity();
  Vec3 singular_values = Vec3::Zero();  // nonincreasing, nonnegative
  Mat3 v = Mat3::Identity();
  double sign = 1.0;  // det(V Uᵀ), the reflection correction
  double cost = 0.0;  // minimized weighted squared residual
  VecX weights;
  double weight_sum = 0.0;
};

// Σ w_i x_i / Σ w_i. Throws kDegenerateWeights when Σ w_i is not positive.
Vec3 weighted_centroid(const PointCloud& points, const VecX& weights);

// Closed-form minimizer of Σ w_i ||g_i - R c_i - t||² over SE(3):
//   U S Vᵀ = svd(C̄ᵀ W Ḡ),  R = V diag(1,1,det(VUᵀ)) Uᵀ,  t = -R μ_c + μ_g.
// Throws kInsufficientPoints for M < 3 and kDegenerateGeometry when the
// covariance has rank < 2 (σ₂ <= 1e-12 σ₁), e.g. collinear clouds.
std::pair<Pose, AlignmentTrace> weighted_kabsch(const Mat3X& camera_points,
                                                const Mat3X& global_points,
                                                const VecX& weights);
std::pair<Pose, AlignmentTrace> weighted_kabsch(const CorrespondenceSet& c);

// r_i = ||g_i - R c_i - t||.
VecX alignment_residuals(const Pose& p, const CorrespondenceSet& c);

// Σ w_i ||g_i - R c_i - t||², the objective the solver minimizes.
double alignment_cost(const Pose& p, const Mat3X& camera_points,
                      const Mat3X& global_points, const VecX& weights);

}  // namespace kloc
