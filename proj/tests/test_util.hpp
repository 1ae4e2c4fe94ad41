#pragma once

#include "kloc/alignment.hpp"
#include "kloc/geometry.hpp"
#include "kloc/rng.hpp"

namespace kloc::test {

inline Mat3 random_rotation(Rng& rng) {
  // Uniform-ish: random quaternion from four normals.
  double q[4];
  for (double& x : q) x = rng.normal();
  const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  return quat_to_matrix(q[0] / n, q[1] / n, q[2] / n, q[3] / n);
}

inline Pose random_pose(Rng& rng, double translation_scale = 5.0) {
  Pose p;
  p.rotation = random_rotation(rng);
  p.translation = translation_scale * Vec3(rng.uniform(-1.0, 1.0),
                                           rng.uniform(-1.0, 1.0),
                                           rng.uniform(-1.0, 1.0));
  return p;
}

inline Mat3X random_cloud(Rng& rng, Eigen::Index m, double scale = 2.0) {
  Mat3X pts(3, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    pts.col(i) = scale * Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                              rng.uniform(-1.0, 1.0));
  }
  return pts;
}

// Self-consistent instance: pixels on a grid, camera points on their rays,
// global points rigidly transformed, everything in front of the camera.
struct Instance {
  CameraIntrinsics k{60.0, 60.0, 39.5, 29.5};
  PixelGrid pixels;  // subset grid 80x60
  Mat3X camera;
  Mat3X global;
  VecX weights;
  VecX depth;
  Pose gt;
};

inline Instance random_instance(Rng& rng, Eigen::Index m,
                                double global_noise = 0.0) {
  Instance inst;
  inst.pixels.width = 80;
  inst.pixels.height = 60;
  inst.pixels.pixels.resize(3, m);
  inst.depth.resize(m);
  inst.camera.resize(3, m);
  inst.weights.resize(m);
  inst.gt = random_pose(rng);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double u = rng.uniform(0.0, 79.0);
    const double v = rng.uniform(0.0, 59.0);
    inst.pixels.pixels.col(i) = Vec3(u, v, 1.0);
    inst.depth[i] = rng.uniform(1.5, 5.0);
    inst.camera.col(i) = inst.depth[i] * inst.k.ray(u, v);
    inst.weights[i] = rng.uniform(0.2, 1.0);
  }
  inst.global = (inst.gt.rotation * inst.camera).colwise() + inst.gt.translation;
  if (global_noise > 0.0) {
    for (Eigen::Index i = 0; i < m; ++i) {
      inst.global.col(i) += global_noise * Vec3(rng.normal(), rng.normal(),
                                                rng.normal());
    }
  }
  return inst;
}

inline CorrespondenceSet to_set(const Instance& inst) {
  CorrespondenceSet c;
  c.pixels = inst.pixels;
  c.camera_points = PointCloud{inst.camera, FrameTag::kCamera};
  c.global_points = PointCloud{inst.global, FrameTag::kGlobal};
  c.weights = inst.weights;
  return c;
}

}  // namespace kloc::test
