#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>

#include "kloc/errors.hpp"

namespace kloc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;
using Mat2X = Eigen::Matrix<double, 2, Eigen::Dynamic>;
using VecX = Eigen::VectorXd;

// z at or below this is "behind the camera" for projection purposes.
inline constexpr double kBehindCameraEps = 1e-6;

// Rigid transform mapping camera-frame points into the global frame:
// x_global = rotation * x_camera + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return Pose{}; }
  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
};

bool is_rotation(const Mat3& r, double tol);
void require_rotation(const Mat3& r, double tol = 1e-6);

Pose compose(const Pose& a, const Pose& b);  // (a∘b) applies b, then a
Pose invert(const Pose& p);

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;

  CameraIntrinsics() = default;
  CameraIntrinsics(double fx_, double fy_, double cx_, double cy_);

  Mat3 matrix() const;
  Mat3 inverse_matrix() const;
  // Unit-depth camera ray of a homogeneous pixel (z component is 1).
  Vec3 ray(double u, double v) const {
    return Vec3((u - cx) / fx, (v - cy) / fy, 1.0);
  }
};

// Homogeneous pixel coordinates (u, v, 1); not necessarily the full raster,
// just the cells that participate in a computation.
struct PixelGrid {
  int width = 0;
  int height = 0;
  Mat3X pixels;  // one column per pixel

  static PixelGrid full(int width, int height);  // row-major cell order
  Eigen::Index count() const { return pixels.cols(); }
  void validate() const;
};

struct DepthMap {
  VecX values;
  double d_min = 0.1;
  double d_max = 10.0;

  void validate() const;
};

enum class FrameTag { kCamera, kGlobal };

struct PointCloud {
  Mat3X points;
  FrameTag frame = FrameTag::kCamera;

  Eigen::Index count() const { return points.cols(); }
};

PointCloud transform_points(const Pose& p, const PointCloud& cloud);

// Angle between two rotations in degrees, in [0, 180]. The arccos argument is
// clamped so round-off near trace = 3 cannot produce NaN.
double rotation_angle_deg(const Mat3& r1, const Mat3& r2);
double rotation_angle_rad(const Mat3& r1, const Mat3& r2);

// c_i = d_i * K^-1 * u_i, tagged camera-frame. Throws kRange on d <= 0.
PointCloud back_project(const DepthMap& d, const CameraIntrinsics& k,
                        const PixelGrid& g);

// Pinhole projection of p ∘ cloud. Throws kBehindCamera when a transformed
// point has z <= kBehindCameraEps.
Mat2X project(const Pose& p, const PointCloud& cloud,
              const CameraIntrinsics& k);

// (tx, ty, tz, qw, qx, qy, qz), Hamilton convention, qw canonicalized >= 0.
using PoseVec7 = std::array<double, 7>;
PoseVec7 pose_to_quat(const Pose& p);
Pose quat_to_pose(const PoseVec7& q);

Mat3 quat_to_matrix(double qw, double qx, double qy, double qz);
std::array<double, 4> matrix_to_quat(const Mat3& r);

// Rodrigues: rotation about `axis` (normalized internally) by angle radians.
Mat3 axis_angle(const Vec3& axis, double angle_rad);

}  // namespace kloc
