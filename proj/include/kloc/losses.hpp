#pragma once

#include "kloc/alignment.hpp"
#include "kloc/geometry.hpp"

namespace kloc {

struct LossWeights {
  double lambda_p = 1.0;
  double lambda_c = 1.0;
  double lambda_r = 0.001;

  void validate() const;
};

struct LossBreakdown {
  double position = 0.0;      // meters
  double rotation = 0.0;      // radians
  double pose = 0.0;          // position + rotation
  double consistency = 0.0;   // meters
  double reprojection = 0.0;  // pixels
  double total = 0.0;
};

double position_loss(const Vec3& t_hat, const Vec3& t_gt);

// arccos((trace(R̂ R⁻¹) - 1) / 2), clamped argument, radians.
double rotation_loss(const Mat3& r_hat, const Mat3& r_gt);

// position + rotation, summed as-is (meters + radians).
double pose_loss(const Pose& p_hat, const Pose& p_gt);

// (1/M) Σ ||g_i - T c_i||.
double consistency_loss(const CorrespondenceSet& c, const Pose& p_gt);

// (1/M) Σ ||u_i - π(T⁻¹ g_i)||. A point behind the camera contributes the
// image diagonal in pixels instead, keeping the value finite.
double reprojection_loss(const CorrespondenceSet& c, const Pose& p_gt,
                         const CameraIntrinsics& k);

LossBreakdown total_loss(double position, double rotation, double consistency,
                         double reprojection, const LossWeights& w);

double behind_camera_penalty(const PixelGrid& grid);

}  // namespace kloc
