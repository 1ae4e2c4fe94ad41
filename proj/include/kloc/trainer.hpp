#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "kloc/diff.hpp"
#include "kloc/losses.hpp"
#include "kloc/robust.hpp"
#include "kloc/scene.hpp"

namespace kloc {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;  // decoupled
  double learning_rate = 1e-4;

  void validate() const;
};

struct AdamState {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;
  int64_t t = 0;
};

// One Adam update with decoupled weight decay:
//   θ ← θ - lr (m̂ / (√v̂ + ε) + wd θ).
void adam_step(Eigen::MatrixXd& params, const Eigen::MatrixXd& grads,
               AdamState& state, const AdamConfig& cfg);

enum class TrainMode { kDirect, kMlp };
enum class CameraParam { kDepth, kXyz };

struct TrainConfig {
  TrainMode mode = TrainMode::kDirect;
  CameraParam camera_param = CameraParam::kDepth;
  LossWeights loss_weights;
  AdamConfig adam;
  int epochs = 400;
  double d_min = 0.1;
  double d_max = 10.0;
  int grid_width = 80;
  int grid_height = 60;
  int hidden_size = 32;  // two hidden layers of this width (mlp heads)
  uint64_t seed = 0;
  // Global-map initialization: scene-extent center plus noise of
  // σ = 1% of init_extent.
  Vec3 init_center = Vec3::Zero();
  double init_extent = 1.0;

  void validate() const;
  uint64_t config_hash() const;
};

struct ParamTensor {
  std::string name;
  Eigen::MatrixXd value;
  AdamState state;
};

struct TrainableModel {
  TrainMode mode = TrainMode::kDirect;
  CameraParam camera_param = CameraParam::kDepth;
  double d_min = 0.1;
  double d_max = 10.0;
  int hidden_size = 32;
  int64_t epochs_completed = 0;
  uint64_t config_hash = 0;
  std::vector<ParamTensor> params;
  // direct mode: frame id -> indices of (camera, global, weight) tensors
  std::map<int, std::array<int, 3>> frame_params;

  ParamTensor& tensor(const std::string& name);
  const ParamTensor& tensor(const std::string& name) const;
};

TrainableModel init_model(const TrainConfig& cfg,
                          const std::vector<Observation>& observations);

// Forward pass. depth = d_min + sigmoid(logit) (d_max - d_min) when the
// camera representation is depth; weights = sigmoid(weight logit).
PredictionMaps predict(const TrainableModel& model, const Observation& obs);

struct EpochStats {
  LossBreakdown median_losses;
  double train_translation_err = 0.0;
  double train_rotation_err_deg = 0.0;
  double heldout_translation_err = 0.0;  // NaN when no held-out frames
  double heldout_rotation_err_deg = 0.0;
  int skipped = 0;
};

struct TrainHistory {
  int64_t start_epoch = 0;
  std::vector<EpochStats> epochs;
};

// Per-frame steps in a seed-shuffled order: predict, correspondences, Kabsch,
// losses, backward, Adam. Frames whose backward hits the singular-value gap
// guard are skipped and counted; more than 50% skips in an epoch aborts.
TrainHistory train(TrainableModel& model,
                   const std::vector<Observation>& observations,
                   const TrainConfig& cfg,
                   const std::vector<Observation>& heldout = {});

// Gradient steps on the position loss alone (translation labels only).
TrainHistory finetune_position_only(TrainableModel& model,
                                    const std::vector<Observation>& observations,
                                    const TrainConfig& cfg, int epochs = 12);

SolveReport localize(const TrainableModel& model, const Observation& obs,
                     Strategy strategy = Strategy::kWeighted,
                     const std::set<std::string>& excluded = {},
                     const RansacConfig& ransac = RansacConfig::rigid_default());

// KLOC-MODEL v1 checkpoint (text header + flat parameter list).
void save_model(const TrainableModel& model, const std::string& path);
TrainableModel load_model(const std::string& path);

// Lower middle element; the median convention used everywhere in reports.
double median(std::vector<double> values);

// --- pipeline graphs (exposed for gradient tests) ---

struct PipelineGraph {
  diff::GraphSpec spec;
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<int> param_slots;    // leaf slots that are trainable
  std::vector<int> param_indices;  // model.params index per leaf
  int depth_slot = -1;
  int cam_slot = -1;
  int global_slot = -1;
  int weight_slot = -1;
  int pose_slot = -1;
  int position_slot = -1;
  int rotation_slot = -1;
  int consistency_slot = -1;
  int reprojection_slot = -1;
};

// Loss coefficients (position, rotation, consistency, reprojection).
using LossCoeffs = std::array<double, 4>;
LossCoeffs training_coeffs(const LossWeights& w);

PipelineGraph build_prediction_graph(const TrainableModel& model,
                                     const Observation& obs);
PipelineGraph build_training_graph(const TrainableModel& model,
                                   const Observation& obs,
                                   const LossCoeffs& coeffs);

// d_depth / d_global / d_weights / d_params extracted from a backward pass.
diff::GradientBundle extract_gradients(const diff::Tape& tape,
                                       const PipelineGraph& graph);

}  // namespace kloc
