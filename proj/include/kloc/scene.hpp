#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kloc/alignment.hpp"
#include "kloc/geometry.hpp"

namespace kloc {

inline constexpr int kDescriptorDim = 16;

struct Landmark {
  int id = 0;
  Vec3 position = Vec3::Zero();
  std::string label = "static";
  VecX descriptor;  // unit vector, kDescriptorDim entries
};

struct SceneModel {
  std::vector<Landmark> landmarks;
  Vec3 extent_min = Vec3::Zero();  // tight bounding box of the landmarks
  Vec3 extent_max = Vec3::Zero();

  Vec3 extent_center() const { return 0.5 * (extent_min + extent_max); }
  double extent_diagonal() const { return (extent_max - extent_min).norm(); }
  void recompute_extent();
  void validate() const;
};

struct Frame {
  int id = 0;
  Pose pose_gt;  // camera -> global
  CameraIntrinsics intrinsics;
  PixelGrid grid;  // full raster at the configured output resolution
};

// Per-frame measurements, one entry per grid cell that sees a landmark
// (with nearest-landmark assignment that is normally every cell).
struct Observation {
  Frame frame;
  PixelGrid pixels;  // the participating cells
  std::vector<int> landmark_ids;
  std::vector<std::string> labels;
  VecX depths;      // stored (possibly noisy) z-depth, clamped to range
  Mat3X global_gt;  // stored (possibly noisy) global coordinates
  Mat3X rays;       // unit camera-frame ray per cell
  Eigen::MatrixXd descriptors;  // kDescriptorDim x M
  std::vector<uint8_t> outlier_mask;
  double d_min = 0.1;
  double d_max = 10.0;

  Eigen::Index count() const { return depths.size(); }
};

using LabelMix = std::vector<std::pair<std::string, double>>;

LabelMix default_label_mix();  // static-heavy with a dynamic slice

SceneModel generate_scene(int n_landmarks, const Vec3& extent_min,
                          const Vec3& extent_max, const LabelMix& label_mix,
                          uint64_t seed);

enum class TrajectoryMode { kOrbit, kRandomLookAt };

CameraIntrinsics default_intrinsics(int width, int height);

// Poses looking at the scene so that every frame sees at least
// `min_visible_frac` of the landmarks inside both image and depth range.
std::vector<Frame> generate_trajectory(const SceneModel& scene, int n_frames,
                                       TrajectoryMode mode, uint64_t seed,
                                       const CameraIntrinsics& k, int grid_w,
                                       int grid_h,
                                       double d_min = 0.1, double d_max = 10.0,
                                       double min_visible_frac = 0.2);

struct SimNoise {
  double depth_sigma = 0.0;  // std as a fraction of the true depth
  double pixel_sigma = 0.0;  // pixel jitter (px) on the global-side ray
};

// Maps each grid cell to the nearest visible landmark by projection. Stored
// depth and global coordinates get independent noise draws, so they are
// mutually consistent only at zero noise. Outlier cells take the descriptor,
// label and coordinates of a uniformly random other landmark and are flagged.
Observation render(const SceneModel& scene, const Frame& frame,
                   const SimNoise& noise, double outlier_rate, uint64_t seed,
                   double d_min = 0.1, double d_max = 10.0);

struct PredictionMaps {
  VecX depth;           // empty when camera_points were predicted directly
  Mat3X camera_points;  // camera frame, one column per cell
  Mat3X global_points;
  VecX weights;
};

CorrespondenceSet to_correspondences(const Observation& obs,
                                     const PredictionMaps& predicted);

// The observation's own stored maps as predictions (unit weights).
PredictionMaps gt_prediction_maps(const Observation& obs);

}  // namespace kloc
