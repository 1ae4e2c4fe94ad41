#include "kloc/geometry.hpp"

#include <cmath>

#include "kloc/rng.hpp"

namespace kloc {

std::vector<int> sample_distinct(Rng& rng, int n, int k) {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(k));
  for (int j = n - k; j < n; ++j) {
    int r = static_cast<int>(rng.below(static_cast<uint64_t>(j) + 1));
    bool used = false;
    for (int x : out) {
      if (x == r) {
        used = true;
        break;
      }
    }
    out.push_back(used ? j : r);
  }
  return out;
}

bool is_rotation(const Mat3& r, double tol) {
  const Mat3 rtr = r.transpose() * r;
  if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

void require_rotation(const Mat3& r, double tol) {
  if (!is_rotation(r, tol)) {
    throw Error(ErrorCode::kInvalidRotation,
                "matrix is not a rotation (orthonormality check failed)");
  }
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Pose invert(const Pose& p) {
  Pose out;
  out.rotation = p.rotation.transpose();
  out.translation = -(out.rotation * p.translation);
  return out;
}

CameraIntrinsics::CameraIntrinsics(double fx_, double fy_, double cx_,
                                   double cy_)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
  if (fx <= 0.0 || fy <= 0.0) {
    throw Error(ErrorCode::kInvalidConfig, "focal lengths must be positive");
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Mat3 CameraIntrinsics::inverse_matrix() const {
  Mat3 k;
  k << 1.0 / fx, 0, -cx / fx, 0, 1.0 / fy, -cy / fy, 0, 0, 1;
  return k;
}

PixelGrid PixelGrid::full(int width, int height) {
  PixelGrid g;
  g.width = width;
  g.height = height;
  g.pixels.resize(3, static_cast<Eigen::Index>(width) * height);
  Eigen::Index i = 0;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u, ++i) {
      g.pixels.col(i) = Vec3(u, v, 1.0);
    }
  }
  return g;
}

void PixelGrid::validate() const {
  for (Eigen::Index i = 0; i < pixels.cols(); ++i) {
    const double u = pixels(0, i), v = pixels(1, i), w = pixels(2, i);
    if (w != 1.0 || u < 0.0 || u >= width || v < 0.0 || v >= height) {
      throw Error(ErrorCode::kRange, "pixel grid entry out of bounds");
    }
  }
}

void DepthMap::validate() const {
  if (d_min <= 0.0 || d_max <= d_min) {
    throw Error(ErrorCode::kRange, "invalid depth range");
  }
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double d = values[i];
    if (!std::isfinite(d) || d < d_min || d > d_max) {
      throw Error(ErrorCode::kRange, "depth value outside range");
    }
  }
}

PointCloud transform_points(const Pose& p, const PointCloud& cloud) {
  PointCloud out;
  out.points = (p.rotation * cloud.points).colwise() + p.translation;
  out.frame = cloud.frame == FrameTag::kCamera ? FrameTag::kGlobal
                                               : FrameTag::kCamera;
  return out;
}

double rotation_angle_rad(const Mat3& r1, const Mat3& r2) {
  require_rotation(r1);
  require_rotation(r2);
  const double tr = (r1 * r2.transpose()).trace();
  const double arg = std::min(1.0, std::max(-1.0, 0.5 * (tr - 1.0)));
  return std::acos(arg);
}

double rotation_angle_deg(const Mat3& r1, const Mat3& r2) {
  return rotation_angle_rad(r1, r2) * (180.0 / M_PI);
}

PointCloud back_project(const DepthMap& d, const CameraIntrinsics& k,
                        const PixelGrid& g) {
  if (d.values.size() != g.count()) {
    throw Error(ErrorCode::kShapeMismatch,
                "depth map and pixel grid lengths differ");
  }
  PointCloud out;
  out.frame = FrameTag::kCamera;
  out.points.resize(3, g.count());
  for (Eigen::Index i = 0; i < g.count(); ++i) {
    const double depth = d.values[i];
    if (!(depth > 0.0)) {
      throw Error(ErrorCode::kRange, "nonpositive depth in back-projection");
    }
    out.points.col(i) = depth * k.ray(g.pixels(0, i), g.pixels(1, i));
  }
  return out;
}

Mat2X project(const Pose& p, const PointCloud& cloud,
              const CameraIntrinsics& k) {
  Mat2X out(2, cloud.count());
  for (Eigen::Index i = 0; i < cloud.count(); ++i) {
    const Vec3 x = p.apply(cloud.points.col(i));
    if (x.z() <= kBehindCameraEps) {
      throw Error(ErrorCode::kBehindCamera,
                  "point at or behind the camera plane");
    }
    out(0, i) = k.fx * x.x() / x.z() + k.cx;
    out(1, i) = k.fy * x.y() / x.z() + k.cy;
  }
  return out;
}

Mat3 quat_to_matrix(double qw, double qx, double qy, double qz) {
  const double n = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
  if (n < 1e-12) {
    throw Error(ErrorCode::kInvalidRotation, "zero-norm quaternion");
  }
  if (std::abs(n - 1.0) > 1e-6) {
    throw Error(ErrorCode::kInvalidRotation,
                "quaternion is not unit within tolerance");
  }
  const double w = qw / n, x = qx / n, y = qy / n, z = qz / n;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

std::array<double, 4> matrix_to_quat(const Mat3& r) {
  // Shepperd's method: branch on the largest of (trace, diagonal entries).
  double qw, qx, qy, qz;
  const double tr = r.trace();
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    qw = 0.25 * s;
    qx = (r(2, 1) - r(1, 2)) / s;
    qy = (r(0, 2) - r(2, 0)) / s;
    qz = (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
    qw = (r(2, 1) - r(1, 2)) / s;
    qx = 0.25 * s;
    qy = (r(0, 1) + r(1, 0)) / s;
    qz = (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
    qw = (r(0, 2) - r(2, 0)) / s;
    qx = (r(0, 1) + r(1, 0)) / s;
    qy = 0.25 * s;
    qz = (r(1, 2) + r(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
    qw = (r(1, 0) - r(0, 1)) / s;
    qx = (r(0, 2) + r(2, 0)) / s;
    qy = (r(1, 2) + r(2, 1)) / s;
    qz = 0.25 * s;
  }
  double n = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
  qw /= n;
  qx /= n;
  qy /= n;
  qz /= n;
  // Canonical sign so serialization round-trips byte-identically.
  bool flip = qw < 0.0;
  if (qw == 0.0) {
    flip = qx < 0.0 || (qx == 0.0 && (qy < 0.0 || (qy == 0.0 && qz < 0.0)));
  }
  if (flip) {
    qw = -qw;
    qx = -qx;
    qy = -qy;
    qz = -qz;
  }
  return {qw, qx, qy, qz};
}

PoseVec7 pose_to_quat(const Pose& p) {
  require_rotation(p.rotation);
  const auto q = matrix_to_quat(p.rotation);
  return {p.translation.x(), p.translation.y(), p.translation.z(),
          q[0],              q[1],              q[2],
          q[3]};
}

Pose quat_to_pose(const PoseVec7& q) {
  Pose p;
  p.translation = Vec3(q[0], q[1], q[2]);
  p.rotation = quat_to_matrix(q[3], q[4], q[5], q[6]);
  return p;
}

Mat3 axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (n < 1e-15) {
    throw Error(ErrorCode::kInvalidRotation, "zero-norm rotation axis");
  }
  return Eigen::AngleAxisd(angle_rad, axis / n).toRotationMatrix();
}

}  // namespace kloc
