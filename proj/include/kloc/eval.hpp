#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kloc/report.hpp"
#include "kloc/trainer.hpp"

namespace kloc {

struct EvalResult {
  std::vector<double> translation_err;  // meters, per frame
  std::vector<double> rotation_err_deg;
  double median_translation = 0.0;
  double median_rotation_deg = 0.0;
  Strategy strategy = Strategy::kWeighted;
  double mean_prediction_ms = 0.0;
  double mean_pose_ms = 0.0;
};

using PredictFn = std::function<PredictionMaps(const Observation&)>;

// Localizes every frame with the given predictions and strategy and compares
// against the frames' reference poses. Timings are wall-clock means.
EvalResult evaluate_frames(const PredictFn& predict_fn,
                           const std::vector<Observation>& frames,
                           Strategy strategy,
                           const std::set<std::string>& excluded = {},
                           const RansacConfig& ransac =
                               RansacConfig::rigid_default());

EvalResult evaluate_model(const TrainableModel& model,
                          const std::vector<Observation>& frames,
                          Strategy strategy,
                          const std::set<std::string>& excluded = {},
                          const RansacConfig& ransac =
                              RansacConfig::rigid_default());

// Serializes per-frame errors and medians; timing is intentionally left out
// so reports from seeded runs compare byte-for-byte.
void eval_to_report(const EvalResult& result, const std::string& section,
                    Report& report);

// RMSE between predicted global points and the observation's reference
// global points over cells whose predicted weight exceeds `weight_floor`.
// NaN when no cell qualifies.
double global_cloud_rmse(const TrainableModel& model,
                         const std::vector<Observation>& frames,
                         double weight_floor = 0.5);

void history_to_report(const TrainHistory& history, Report& report);

}  // namespace kloc
