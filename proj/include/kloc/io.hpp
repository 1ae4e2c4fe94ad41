#pragma once

#include <string>
#include <vector>

#include "kloc/scene.hpp"

namespace kloc {

// KLOC-SCENE v1: header, `landmark <id> <x> <y> <z> <label>` lines, then
// `descriptor <id> <16 floats>` lines. Floats use 17 significant digits, so
// save/load round-trips byte-identically.
void save_scene(const SceneModel& scene, const std::string& path);
SceneModel load_scene(const std::string& path);

// KLOC-TRAJ v1: `frame <id> <tx> <ty> <tz> <qw> <qx> <qy> <qz>`, Hamilton
// convention, camera->global. Intrinsics and grid are restored from the
// paired observations file.
void save_trajectory(const std::vector<Frame>& frames, const std::string& path);
// Returns poses only; fills id and pose_gt, leaving grid/intrinsics empty.
std::vector<Frame> load_trajectory(const std::string& path);

// KLOC-OBS v1: per frame a header line
//   frame <id> <fx> <fy> <cx> <cy> <width> <height> <dmin> <dmax> <ncells>
// followed by ncells lines
//   cell <u> <v> <landmark-id> <outlier> <depth> <gx> <gy> <gz>
// Descriptors, labels and rays are reconstructed from the scene.
void save_observations(const std::vector<Observation>& observations,
                       const std::string& path);
std::vector<Observation> load_observations(const std::string& path,
                                           const SceneModel& scene,
                                           const std::vector<Frame>& trajectory);

}  // namespace kloc
