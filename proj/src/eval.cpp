#include "kloc/eval.hpp"

#include <chrono>
#include <cmath>

namespace kloc {

EvalResult evaluate_frames(const PredictFn& predict_fn,
                           const std::vector<Observation>& frames,
                           Strategy strategy,
                           const std::set<std::string>& excluded,
                           const RansacConfig& ransac) {
  using clock = std::chrono::steady_clock;
  EvalResult result;
  result.strategy = strategy;
  double predict_total = 0.0;
  double pose_total = 0.0;
  for (const auto& obs : frames) {
    const auto t0 = clock::now();
    const PredictionMaps maps = predict_fn(obs);
    const auto t1 = clock::now();
    const CorrespondenceSet c = to_correspondences(obs, maps);
    const SolveReport report =
        solve(strategy, c, obs.labels, excluded, obs.frame.intrinsics, ransac);
    const auto t2 = clock::now();
    predict_total += std::chrono::duration<double, std::milli>(t1 - t0).count();
    pose_total += std::chrono::duration<double, std::milli>(t2 - t1).count();
    result.translation_err.push_back(
        (report.pose.translation - obs.frame.pose_gt.translation).norm());
    result.rotation_err_deg.push_back(
        rotation_angle_deg(report.pose.rotation, obs.frame.pose_gt.rotation));
  }
  result.median_translation = median(result.translation_err);
  result.median_rotation_deg = median(result.rotation_err_deg);
  const double n = static_cast<double>(frames.size());
  result.mean_prediction_ms = frames.empty() ? 0.0 : predict_total / n;
  result.mean_pose_ms = frames.empty() ? 0.0 : pose_total / n;
  return result;
}

EvalResult evaluate_model(const TrainableModel& model,
                          const std::vector<Observation>& frames,
                          Strategy strategy,
                          const std::set<std::string>& excluded,
                          const RansacConfig& ransac) {
  return evaluate_frames(
      [&model](const Observation& obs) { return predict(model, obs); }, frames,
      strategy, excluded, ransac);
}

void eval_to_report(const EvalResult& result, const std::string& section,
                    Report& report) {
  report.begin_section(section);
  report.set("strategy", strategy_name(result.strategy));
  report.set_i("frames", static_cast<int64_t>(result.translation_err.size()));
  report.set_f("median_translation_m", result.median_translation);
  report.set_f("median_rotation_deg", result.median_rotation_deg);
  for (size_t i = 0; i < result.translation_err.size(); ++i) {
    report.set_f("frame" + std::to_string(i) + ".translation_m",
                 result.translation_err[i]);
    report.set_f("frame" + std::to_string(i) + ".rotation_deg",
                 result.rotation_err_deg[i]);
  }
}

double global_cloud_rmse(const TrainableModel& model,
                         const std::vector<Observation>& frames,
                         double weight_floor) {
  double sq_sum = 0.0;
  int64_t n = 0;
  for (const auto& obs : frames) {
    const PredictionMaps maps = predict(model, obs);
    for (Eigen::Index i = 0; i < obs.count(); ++i) {
      if (maps.weights[i] <= weight_floor) continue;
      sq_sum += (maps.global_points.col(i) - obs.global_gt.col(i)).squaredNorm();
      ++n;
    }
  }
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(sq_sum / static_cast<double>(n));
}

void history_to_report(const TrainHistory& history, Report& report) {
  report.begin_section("history");
  report.set_i("start_epoch", history.start_epoch);
  report.set_i("epochs", static_cast<int64_t>(history.epochs.size()));
  for (size_t e = 0; e < history.epochs.size(); ++e) {
    const auto& s = history.epochs[e];
    const std::string p =
        "epoch" + std::to_string(history.start_epoch + static_cast<int64_t>(e) + 1);
    report.set_f(p + ".loss_total", s.median_losses.total);
    report.set_f(p + ".loss_pose", s.median_losses.pose);
    report.set_f(p + ".loss_position", s.median_losses.position);
    report.set_f(p + ".loss_rotation", s.median_losses.rotation);
    report.set_f(p + ".loss_consistency", s.median_losses.consistency);
    report.set_f(p + ".loss_reprojection", s.median_losses.reprojection);
    report.set_f(p + ".train_translation_m", s.train_translation_err);
    report.set_f(p + ".train_rotation_deg", s.train_rotation_err_deg);
    report.set_f(p + ".heldout_translation_m", s.heldout_translation_err);
    report.set_f(p + ".heldout_rotation_deg", s.heldout_rotation_err_deg);
    report.set_i(p + ".skipped", s.skipped);
  }
}

}  // namespace kloc
