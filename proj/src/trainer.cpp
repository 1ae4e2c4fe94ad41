#include "kloc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "kloc/report.hpp"
#include "kloc/rng.hpp"

namespace kloc {

void AdamConfig::validate() const {
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 ||
      epsilon <= 0.0 || weight_decay < 0.0 || learning_rate <= 0.0) {
    throw Error(ErrorCode::kInvalidConfig, "invalid Adam configuration");
  }
}

void TrainConfig::validate() const {
  adam.validate();
  loss_weights.validate();
  if (epochs < 1) throw Error(ErrorCode::kInvalidConfig, "epochs must be >= 1");
  if (d_min <= 0.0 || d_max <= d_min) {
    throw Error(ErrorCode::kInvalidConfig, "invalid depth range");
  }
  if (grid_width < 1 || grid_height < 1 || hidden_size < 1 ||
      init_extent <= 0.0) {
    throw Error(ErrorCode::kInvalidConfig, "invalid train configuration");
  }
}

uint64_t TrainConfig::config_hash() const {
  std::ostringstream s;
  s << (mode == TrainMode::kDirect ? "direct" : "mlp") << "|"
    << (camera_param == CameraParam::kDepth ? "depth" : "xyz") << "|"
    << fmt17(loss_weights.lambda_p) << "|" << fmt17(loss_weights.lambda_c)
    << "|" << fmt17(loss_weights.lambda_r) << "|" << fmt17(adam.beta1) << "|"
    << fmt17(adam.beta2) << "|" << fmt17(adam.epsilon) << "|"
    << fmt17(adam.weight_decay) << "|" << fmt17(adam.learning_rate) << "|"
    << epochs << "|" << fmt17(d_min) << "|" << fmt17(d_max) << "|"
    << grid_width << "x" << grid_height << "|" << hidden_size << "|" << seed;
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : s.str()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

void adam_step(Eigen::MatrixXd& params, const Eigen::MatrixXd& grads,
               AdamState& state, const AdamConfig& cfg) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "adam_step: shape mismatch");
  }
  if (state.m.size() == 0) {
    state.m = Eigen::MatrixXd::Zero(params.rows(), params.cols());
    state.v = Eigen::MatrixXd::Zero(params.rows(), params.cols());
  }
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
  state.v = cfg.beta2 * state.v +
            (1.0 - cfg.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const Eigen::ArrayXXd m_hat = state.m.array() / bc1;
  const Eigen::ArrayXXd v_hat = state.v.array() / bc2;
  params -= cfg.learning_rate *
            ((m_hat / (v_hat.sqrt() + cfg.epsilon)).matrix() +
             cfg.weight_decay * params);
}

ParamTensor& TrainableModel::tensor(const std::string& name) {
  for (auto& p : params) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown parameter tensor: " + name);
}

const ParamTensor& TrainableModel::tensor(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown parameter tensor: " + name);
}

namespace {

Eigen::MatrixXd fan_in_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Eigen::MatrixXd w(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = rng.uniform(-bound, bound);
  return w;
}

int d_head_inputs() { return kDescriptorDim + 3; }

int d_head_outputs(CameraParam camera_param) {
  return camera_param == CameraParam::kDepth ? 2 : 4;
}

}  // namespace

TrainableModel init_model(const TrainConfig& cfg,
                          const std::vector<Observation>& observations) {
  cfg.validate();
  TrainableModel model;
  model.mode = cfg.mode;
  model.camera_param = cfg.camera_param;
  model.d_min = cfg.d_min;
  model.d_max = cfg.d_max;
  model.hidden_size = cfg.hidden_size;
  model.config_hash = cfg.config_hash();
  Rng rng = Rng::fork(cfg.seed, 0x1217);

  if (cfg.mode == TrainMode::kDirect) {
    const double noise_sigma = 0.01 * cfg.init_extent;
    const double mid = 0.5 * (cfg.d_min + cfg.d_max);
    for (const auto& obs : observations) {
      const Eigen::Index m = obs.count();
      std::array<int, 3> idx;
      ParamTensor cam;
      cam.name = "frame" + std::to_string(obs.frame.id) + ".camera";
      if (cfg.camera_param == CameraParam::kDepth) {
        cam.value = Eigen::MatrixXd::Zero(1, m);  // logit 0 = range midpoint
      } else {
        cam.value.resize(3, m);
        for (Eigen::Index i = 0; i < m; ++i) {
          cam.value.col(i) = mid * obs.frame.intrinsics.ray(
                                       obs.pixels.pixels(0, i),
                                       obs.pixels.pixels(1, i));
        }
      }
      idx[0] = static_cast<int>(model.params.size());
      model.params.push_back(std::move(cam));

      ParamTensor glob;
      glob.name = "frame" + std::to_string(obs.frame.id) + ".global";
      glob.value.resize(3, m);
      for (Eigen::Index i = 0; i < m; ++i) {
        glob.value.col(i) =
            cfg.init_center + noise_sigma * Vec3(rng.normal(), rng.normal(),
                                                 rng.normal());
      }
      idx[1] = static_cast<int>(model.params.size());
      model.params.push_back(std::move(glob));

      ParamTensor wt;
      wt.name = "frame" + std::to_string(obs.frame.id) + ".weight";
      wt.value = Eigen::MatrixXd::Zero(1, m);  // sigmoid(0) = 0.5
      idx[2] = static_cast<int>(model.params.size());
      model.params.push_back(std::move(wt));

      model.frame_params[obs.frame.id] = idx;
    }
  } else {
    const int hidden = cfg.hidden_size;
    const int din = d_head_inputs();
    const int dout = d_head_outputs(cfg.camera_param);
    auto push = [&](const std::string& name, Eigen::MatrixXd value) {
      model.params.push_back(ParamTensor{name, std::move(value), {}});
    };
    push("d.w1", fan_in_init(hidden, din, rng));
    push("d.b1", Eigen::MatrixXd::Zero(hidden, 1));
    push("d.w2", fan_in_init(hidden, hidden, rng));
    push("d.b2", Eigen::MatrixXd::Zero(hidden, 1));
    push("d.w3", fan_in_init(dout, hidden, rng));
    Eigen::MatrixXd b3 = Eigen::MatrixXd::Zero(dout, 1);
    if (cfg.camera_param == CameraParam::kXyz) {
      b3(2, 0) = 0.5 * (cfg.d_min + cfg.d_max);  // start in front of camera
    }
    push("d.b3", std::move(b3));
    push("g.w1", fan_in_init(hidden, kDescriptorDim, rng));
    push("g.b1", Eigen::MatrixXd::Zero(hidden, 1));
    push("g.w2", fan_in_init(hidden, hidden, rng));
    push("g.b2", Eigen::MatrixXd::Zero(hidden, 1));
    push("g.w3", fan_in_init(3, hidden, rng));
    Eigen::MatrixXd c3 = cfg.init_center;
    push("g.b3", std::move(c3));
  }
  return model;
}

LossCoeffs training_coeffs(const LossWeights& w) {
  return {w.lambda_p, w.lambda_p, w.lambda_c, w.lambda_r};
}

namespace {

// Shared graph assembly: from prediction slots to losses (when coeffs given).
void finish_graph(PipelineGraph& graph, const TrainableModel& model,
                  const Observation& obs, const LossCoeffs* coeffs) {
  auto& spec = graph.spec;
  const CameraIntrinsics& k = obs.frame.intrinsics;

  if (model.camera_param == CameraParam::kDepth) {
    const int depth =
        spec.affine(spec.sigmoid(graph.depth_slot), model.d_max - model.d_min,
                    model.d_min);
    graph.depth_slot = depth;
    graph.cam_slot = spec.back_project(depth, k, obs.pixels.pixels);
  }
  graph.weight_slot = spec.sigmoid(graph.weight_slot);

  if (!coeffs) {
    spec.set_output(spec.sum(graph.weight_slot));
    return;
  }

  graph.pose_slot =
      spec.kabsch(graph.cam_slot, graph.global_slot, graph.weight_slot);
  const Pose& gt = obs.frame.pose_gt;
  graph.position_slot = spec.position_loss(graph.pose_slot, gt.translation);
  graph.rotation_slot = spec.rotation_loss(graph.pose_slot, gt.rotation);
  graph.consistency_slot =
      spec.consistency_loss(graph.cam_slot, graph.global_slot, gt);
  graph.reprojection_slot = spec.reprojection_loss(
      graph.global_slot, gt, k, obs.pixels.pixels.topRows<2>(),
      behind_camera_penalty(obs.frame.grid));
  spec.set_output(spec.weighted_sum(
      {graph.position_slot, graph.rotation_slot, graph.consistency_slot,
       graph.reprojection_slot},
      {(*coeffs)[0], (*coeffs)[1], (*coeffs)[2], (*coeffs)[3]}));
}

PipelineGraph build_graph(const TrainableModel& model, const Observation& obs,
                          const LossCoeffs* coeffs) {
  PipelineGraph graph;
  auto& spec = graph.spec;
  const Eigen::Index m = obs.count();

  if (model.mode == TrainMode::kDirect) {
    const auto it = model.frame_params.find(obs.frame.id);
    if (it == model.frame_params.end()) {
      throw Error(ErrorCode::kInvalidConfig,
                  "direct model has no maps for this frame");
    }
    const auto& idx = it->second;
    for (int j = 0; j < 3; ++j) {
      const auto& tensor = model.params[static_cast<size_t>(idx[j])];
      if (tensor.value.cols() != m) {
        throw Error(ErrorCode::kShapeMismatch,
                    "frame maps do not match observation size");
      }
      const int slot = spec.add_input(tensor.value.rows(), tensor.value.cols());
      graph.param_slots.push_back(slot);
      graph.param_indices.push_back(idx[j]);
      graph.inputs.push_back(tensor.value);
    }
    graph.depth_slot = graph.param_slots[0];  // logits (or xyz points)
    if (model.camera_param == CameraParam::kXyz) {
      graph.cam_slot = graph.param_slots[0];
      graph.depth_slot = -1;
    }
    graph.global_slot = graph.param_slots[1];
    graph.weight_slot = graph.param_slots[2];
  } else {
    for (size_t p = 0; p < model.params.size(); ++p) {
      const auto& tensor = model.params[p];
      const int slot = spec.add_input(tensor.value.rows(), tensor.value.cols());
      graph.param_slots.push_back(slot);
      graph.param_indices.push_back(static_cast<int>(p));
      graph.inputs.push_back(tensor.value);
    }
    Eigen::MatrixXd xd(d_head_inputs(), m);
    xd.topRows(kDescriptorDim) = obs.descriptors;
    xd.bottomRows(3) = obs.rays;
    const int xd_slot = spec.add_input(xd.rows(), xd.cols());
    graph.inputs.push_back(std::move(xd));
    const int xg_slot = spec.add_input(kDescriptorDim, m);
    graph.inputs.push_back(obs.descriptors);

    // Tensor order follows init_model: d.w1..d.b3 then g.w1..g.b3.
    auto head = [&](int base, int x) {
      const int h1 = spec.tanh(spec.add_bias(
          spec.matmul(graph.param_slots[static_cast<size_t>(base + 0)], x),
          graph.param_slots[static_cast<size_t>(base + 1)]));
      const int h2 = spec.tanh(spec.add_bias(
          spec.matmul(graph.param_slots[static_cast<size_t>(base + 2)], h1),
          graph.param_slots[static_cast<size_t>(base + 3)]));
      return spec.add_bias(
          spec.matmul(graph.param_slots[static_cast<size_t>(base + 4)], h2),
          graph.param_slots[static_cast<size_t>(base + 5)]);
    };
    const int dout = head(0, xd_slot);
    if (model.camera_param == CameraParam::kDepth) {
      graph.depth_slot = spec.slice_rows(dout, 0, 1);
      graph.weight_slot = spec.slice_rows(dout, 1, 2);
    } else {
      graph.cam_slot = spec.slice_rows(dout, 0, 3);
      graph.weight_slot = spec.slice_rows(dout, 3, 4);
    }
    graph.global_slot = head(6, xg_slot);
  }

  finish_graph(graph, model, obs, coeffs);
  return graph;
}

}  // namespace

PipelineGraph build_prediction_graph(const TrainableModel& model,
                                     const Observation& obs) {
  return build_graph(model, obs, nullptr);
}

PipelineGraph build_training_graph(const TrainableModel& model,
                                   const Observation& obs,
                                   const LossCoeffs& coeffs) {
  return build_graph(model, obs, &coeffs);
}

diff::GradientBundle extract_gradients(const diff::Tape& tape,
                                       const PipelineGraph& graph) {
  diff::GradientBundle bundle;
  if (graph.depth_slot >= 0)
    bundle.d_depth = tape.adjoints[static_cast<size_t>(graph.depth_slot)];
  bundle.d_global = tape.adjoints[static_cast<size_t>(graph.global_slot)];
  bundle.d_weights = tape.adjoints[static_cast<size_t>(graph.weight_slot)];
  Eigen::Index total = 0;
  for (int slot : graph.param_slots)
    total += tape.adjoints[static_cast<size_t>(slot)].size();
  bundle.d_params.resize(total);
  Eigen::Index at = 0;
  for (int slot : graph.param_slots) {
    const auto& adj = tape.adjoints[static_cast<size_t>(slot)];
    for (Eigen::Index c = 0; c < adj.cols(); ++c)
      for (Eigen::Index r = 0; r < adj.rows(); ++r)
        bundle.d_params[at++] = adj(r, c);
  }
  return bundle;
}

PredictionMaps predict(const TrainableModel& model, const Observation& obs) {
  PipelineGraph graph = build_prediction_graph(model, obs);
  const diff::Tape tape = diff::record_forward(graph.spec, graph.inputs);
  PredictionMaps maps;
  if (graph.depth_slot >= 0) {
    maps.depth = tape.values[static_cast<size_t>(graph.depth_slot)]
                     .row(0)
                     .transpose();
  }
  maps.camera_points = tape.values[static_cast<size_t>(graph.cam_slot)];
  maps.global_points = tape.values[static_cast<size_t>(graph.global_slot)];
  maps.weights = tape.values[static_cast<size_t>(graph.weight_slot)]
                     .row(0)
                     .transpose();
  return maps;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

namespace {

struct PoseErrors {
  double translation = 0.0;
  double rotation_deg = 0.0;
};

PoseErrors frame_pose_errors(const TrainableModel& model,
                             const Observation& obs) {
  const SolveReport report = localize(model, obs);
  return {(report.pose.translation - obs.frame.pose_gt.translation).norm(),
          rotation_angle_deg(report.pose.rotation, obs.frame.pose_gt.rotation)};
}

void median_pose_errors(const TrainableModel& model,
                        const std::vector<Observation>& frames, double* t_err,
                        double* r_err) {
  if (frames.empty()) {
    *t_err = std::numeric_limits<double>::quiet_NaN();
    *r_err = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  std::vector<double> te, re;
  for (const auto& obs : frames) {
    const PoseErrors e = frame_pose_errors(model, obs);
    te.push_back(e.translation);
    re.push_back(e.rotation_deg);
  }
  *t_err = median(te);
  *r_err = median(re);
}

TrainHistory run_training(TrainableModel& model,
                          const std::vector<Observation>& observations,
                          const TrainConfig& cfg, const LossCoeffs& coeffs,
                          int epochs,
                          const std::vector<Observation>& heldout) {
  if (observations.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "training needs >= 1 observation");
  }
  TrainHistory history;
  history.start_epoch = model.epochs_completed;

  std::vector<size_t> order(observations.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng =
        Rng::fork(cfg.seed, 0x5u * static_cast<uint64_t>(
                                model.epochs_completed + epoch + 1));
    shuffle_rng.shuffle(order);

    EpochStats stats;
    std::vector<double> position, rotation, pose, consistency, reprojection,
        total;
    for (size_t oi : order) {
      const Observation& obs = observations[oi];
      PipelineGraph graph = build_training_graph(model, obs, coeffs);
      diff::Tape tape;
      try {
        tape = diff::record_forward(graph.spec, graph.inputs);
        diff::backward(tape);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kDegenerateGradient ||
            e.code() == ErrorCode::kDegenerateGeometry) {
          ++stats.skipped;
          continue;
        }
        throw;
      }
      position.push_back(
          tape.values[static_cast<size_t>(graph.position_slot)](0, 0));
      rotation.push_back(
          tape.values[static_cast<size_t>(graph.rotation_slot)](0, 0));
      pose.push_back(position.back() + rotation.back());
      consistency.push_back(
          tape.values[static_cast<size_t>(graph.consistency_slot)](0, 0));
      reprojection.push_back(
          tape.values[static_cast<size_t>(graph.reprojection_slot)](0, 0));
      total.push_back(tape.loss());

      for (size_t j = 0; j < graph.param_slots.size(); ++j) {
        auto& tensor =
            model.params[static_cast<size_t>(graph.param_indices[j])];
        adam_step(tensor.value,
                  tape.adjoints[static_cast<size_t>(graph.param_slots[j])],
                  tensor.state, cfg.adam);
      }
    }
    if (2 * stats.skipped > static_cast<int>(observations.size())) {
      throw Error(ErrorCode::kTrainingAborted,
                  "more than half the frames skipped in an epoch");
    }
    stats.median_losses.position = median(position);
    stats.median_losses.rotation = median(rotation);
    stats.median_losses.pose = median(pose);
    stats.median_losses.consistency = median(consistency);
    stats.median_losses.reprojection = median(reprojection);
    stats.median_losses.total = median(total);
    median_pose_errors(model, observations, &stats.train_translation_err,
                       &stats.train_rotation_err_deg);
    median_pose_errors(model, heldout, &stats.heldout_translation_err,
                       &stats.heldout_rotation_err_deg);
    history.epochs.push_back(stats);
  }
  model.epochs_completed += epochs;
  return history;
}

}  // namespace

TrainHistory train(TrainableModel& model,
                   const std::vector<Observation>& observations,
                   const TrainConfig& cfg,
                   const std::vector<Observation>& heldout) {
  cfg.validate();
  return run_training(model, observations, cfg,
                      training_coeffs(cfg.loss_weights), cfg.epochs, heldout);
}

TrainHistory finetune_position_only(TrainableModel& model,
                                    const std::vector<Observation>& observations,
                                    const TrainConfig& cfg, int epochs) {
  if (observations.empty()) return TrainHistory{model.epochs_completed, {}};
  return run_training(model, observations, cfg, LossCoeffs{1.0, 0.0, 0.0, 0.0},
                      epochs, {});
}

SolveReport localize(const TrainableModel& model, const Observation& obs,
                     Strategy strategy, const std::set<std::string>& excluded,
                     const RansacConfig& ransac) {
  const PredictionMaps maps = predict(model, obs);
  const CorrespondenceSet c = to_correspondences(obs, maps);
  return solve(strategy, c, obs.labels, excluded, obs.frame.intrinsics, ransac);
}

void save_model(const TrainableModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << "KLOC-MODEL v1\n";
  out << "mode " << (model.mode == TrainMode::kDirect ? "direct" : "mlp")
      << "\n";
  out << "camera_param "
      << (model.camera_param == CameraParam::kDepth ? "depth" : "xyz") << "\n";
  out << "d_min " << fmt17(model.d_min) << "\n";
  out << "d_max " << fmt17(model.d_max) << "\n";
  out << "hidden_size " << model.hidden_size << "\n";
  out << "epochs_completed " << model.epochs_completed << "\n";
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(model.config_hash));
  out << "config_hash " << hash << "\n";
  for (const auto& [frame_id, idx] : model.frame_params) {
    out << "frame_maps " << frame_id << " " << idx[0] << " " << idx[1] << " "
        << idx[2] << "\n";
  }
  for (const auto& p : model.params) {
    out << "tensor " << p.name << " " << p.value.rows() << " "
        << p.value.cols() << "\n";
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        out << (c == 0 ? "" : " ") << fmt17(p.value(r, c));
      }
      out << "\n";
    }
  }
}

TrainableModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != "KLOC-MODEL v1") {
    throw Error(ErrorCode::kIo, path + ": expected header 'KLOC-MODEL v1'");
  }
  TrainableModel model;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "mode") {
      std::string v;
      ls >> v;
      model.mode = v == "direct" ? TrainMode::kDirect : TrainMode::kMlp;
    } else if (tag == "camera_param") {
      std::string v;
      ls >> v;
      model.camera_param =
          v == "depth" ? CameraParam::kDepth : CameraParam::kXyz;
    } else if (tag == "d_min") {
      std::string v;
      ls >> v;
      model.d_min = parse_double(v);
    } else if (tag == "d_max") {
      std::string v;
      ls >> v;
      model.d_max = parse_double(v);
    } else if (tag == "hidden_size") {
      ls >> model.hidden_size;
    } else if (tag == "epochs_completed") {
      ls >> model.epochs_completed;
    } else if (tag == "config_hash") {
      std::string v;
      ls >> v;
      model.config_hash = std::strtoull(v.c_str(), nullptr, 16);
    } else if (tag == "frame_maps") {
      int frame_id = 0;
      std::array<int, 3> idx{};
      ls >> frame_id >> idx[0] >> idx[1] >> idx[2];
      model.frame_params[frame_id] = idx;
    } else if (tag == "tensor") {
      ParamTensor p;
      Eigen::Index rows = 0, cols = 0;
      ls >> p.name >> rows >> cols;
      if (!ls || rows < 1 || cols < 1) {
        throw Error(ErrorCode::kIo, path + ": bad tensor header");
      }
      p.value.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) {
          throw Error(ErrorCode::kIo, path + ": truncated tensor");
        }
        std::istringstream vs(line);
        for (Eigen::Index c = 0; c < cols; ++c) {
          std::string tok;
          vs >> tok;
          if (!vs) throw Error(ErrorCode::kIo, path + ": short tensor row");
          p.value(r, c) = parse_double(tok);
        }
      }
      model.params.push_back(std::move(p));
    } else {
      throw Error(ErrorCode::kIo, path + ": unknown record '" + tag + "'");
    }
  }
  return model;
}

}  // namespace kloc
