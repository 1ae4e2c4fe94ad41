#include "kloc/alignment.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace kloc {

void CorrespondenceSet::validate() const {
  const Eigen::Index m = weights.size();
  if (pixels.count() != m || camera_points.count() != m ||
      global_points.count() != m) {
    throw Error(ErrorCode::kShapeMismatch,
                "correspondence set fields have differing lengths");
  }
  if (camera_points.frame != FrameTag::kCamera ||
      global_points.frame != FrameTag::kGlobal) {
    throw Error(ErrorCode::kShapeMismatch,
                "correspondence clouds carry wrong frame tags");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double w = weights[i];
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorCode::kDegenerateWeights,
                  "weights must be finite and nonnegative");
    }
    sum += w;
  }
  if (!(sum > 0.0)) {
    throw Error(ErrorCode::kDegenerateWeights, "total weight is zero");
  }
}

Vec3 weighted_centroid(const PointCloud& points, const VecX& weights) {
  if (points.count() != weights.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "centroid: points and weights lengths differ");
  }
  const double sum = weights.sum();
  if (!(sum > 0.0)) {
    throw Error(ErrorCode::kDegenerateWeights,
                "centroid requires positive total weight");
  }
  return (points.points * weights) / sum;
}

std::pair<Pose, AlignmentTrace> weighted_kabsch(const Mat3X& camera_points,
                                                const Mat3X& global_points,
                                                const VecX& weights) {
  const Eigen::Index m = weights.size();
  if (camera_points.cols() != m || global_points.cols() != m) {
    throw Error(ErrorCode::kShapeMismatch,
                "kabsch: cloud and weight lengths differ");
  }
  if (m < 3) {
    throw Error(ErrorCode::kInsufficientPoints,
                "kabsch requires at least 3 correspondences");
  }
  const double w_sum = weights.sum();
  if (!(w_sum > 0.0)) {
    throw Error(ErrorCode::kDegenerateWeights, "total weight is zero");
  }

  AlignmentTrace trace;
  trace.weights = weights;
  trace.weight_sum = w_sum;
  trace.mu_c = (camera_points * weights) / w_sum;
  trace.mu_g = (global_points * weights) / w_sum;
  trace.c_bar = camera_points.colwise() - trace.mu_c;
  trace.g_bar = global_points.colwise() - trace.mu_g;

  // A = C̄ᵀ W Ḡ as a 3x3 accumulation Σ w_i c̄_i ḡ_iᵀ.
  Mat3 a = Mat3::Zero();
  for (Eigen::Index i = 0; i < m; ++i) {
    a.noalias() += weights[i] * trace.c_bar.col(i) * trace.g_bar.col(i).transpose();
  }

  Eigen::JacobiSVD<Mat3> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  trace.u = svd.matrixU();
  trace.v = svd.matrixV();
  trace.singular_values = svd.singularValues();

  if (trace.singular_values[1] <= 1e-12 * trace.singular_values[0]) {
    throw Error(ErrorCode::kDegenerateGeometry,
                "covariance rank < 2: no unique rotation");
  }

  trace.sign = (trace.v * trace.u.transpose()).determinant() >= 0.0 ? 1.0 : -1.0;

  Pose pose;
  Mat3 d = Mat3::Identity();
  d(2, 2) = trace.sign;
  pose.rotation = trace.v * d * trace.u.transpose();
  pose.translation = -(pose.rotation * trace.mu_c) + trace.mu_g;

  trace.cost = alignment_cost(pose, camera_points, global_points, weights);
  return {pose, trace};
}

std::pair<Pose, AlignmentTrace> weighted_kabsch(const CorrespondenceSet& c) {
  c.validate();
  return weighted_kabsch(c.camera_points.points, c.global_points.points,
                         c.weights);
}

VecX alignment_residuals(const Pose& p, const CorrespondenceSet& c) {
  VecX r(c.count());
  for (Eigen::Index i = 0; i < c.count(); ++i) {
    r[i] = (c.global_points.points.col(i) - p.apply(c.camera_points.points.col(i)))
               .norm();
  }
  return r;
}

double alignment_cost(const Pose& p, const Mat3X& camera_points,
                      const Mat3X& global_points, const VecX& weights) {
  double cost = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    cost += weights[i] *
            (global_points.col(i) - p.apply(camera_points.col(i))).squaredNorm();
  }
  return cost;
}

}  // namespace kloc
