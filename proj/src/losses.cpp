#include "kloc/losses.hpp"

#include <cmath>

namespace kloc {

void LossWeights::validate() const {
  if (lambda_p < 0.0 || lambda_c < 0.0 || lambda_r < 0.0 ||
      !std::isfinite(lambda_p + lambda_c + lambda_r)) {
    throw Error(ErrorCode::kInvalidConfig,
                "loss weights must be finite and nonnegative");
  }
}

double position_loss(const Vec3& t_hat, const Vec3& t_gt) {
  return (t_gt - t_hat).norm();
}

double rotation_loss(const Mat3& r_hat, const Mat3& r_gt) {
  return rotation_angle_rad(r_hat, r_gt);
}

double pose_loss(const Pose& p_hat, const Pose& p_gt) {
  return position_loss(p_hat.translation, p_gt.translation) +
         rotation_loss(p_hat.rotation, p_gt.rotation);
}

double consistency_loss(const CorrespondenceSet& c, const Pose& p_gt) {
  const Eigen::Index m = c.count();
  if (m < 1) {
    throw Error(ErrorCode::kInsufficientPoints,
                "consistency loss over an empty set");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    sum += (c.global_points.points.col(i) -
            p_gt.apply(c.camera_points.points.col(i)))
               .norm();
  }
  return sum / static_cast<double>(m);
}

double behind_camera_penalty(const PixelGrid& grid) {
  return std::sqrt(static_cast<double>(grid.width) * grid.width +
                   static_cast<double>(grid.height) * grid.height);
}

double reprojection_loss(const CorrespondenceSet& c, const Pose& p_gt,
                         const CameraIntrinsics& k) {
  const Eigen::Index m = c.count();
  if (m < 1) {
    throw Error(ErrorCode::kInsufficientPoints,
                "reprojection loss over an empty set");
  }
  const Pose global_to_camera = invert(p_gt);
  const double penalty = behind_camera_penalty(c.pixels);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vec3 x = global_to_camera.apply(c.global_points.points.col(i));
    if (x.z() <= kBehindCameraEps) {
      sum += penalty;
      continue;
    }
    const double du = k.fx * x.x() / x.z() + k.cx - c.pixels.pixels(0, i);
    const double dv = k.fy * x.y() / x.z() + k.cy - c.pixels.pixels(1, i);
    sum += std::sqrt(du * du + dv * dv);
  }
  return sum / static_cast<double>(m);
}

LossBreakdown total_loss(double position, double rotation, double consistency,
                         double reprojection, const LossWeights& w) {
  w.validate();
  LossBreakdown b;
  b.position = position;
  b.rotation = rotation;
  b.pose = position + rotation;
  b.consistency = consistency;
  b.reprojection = reprojection;
  b.total = w.lambda_p * b.pose + w.lambda_c * consistency +
            w.lambda_r * reprojection;
  return b;
}

}  // namespace kloc
