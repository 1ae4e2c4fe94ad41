#include "kloc/diff.hpp"

#include <cmath>

namespace kloc::diff {

namespace {

constexpr double kArccosClamp = 1e-7;   // gradient-side clamp margin
constexpr double kSvdGapRel = 1e-6;     // singular-value gap guard

Mat3 rotation_from_pose_slot(const Eigen::MatrixXd& pose) {
  Mat3 r;
  r << pose(0, 0), pose(1, 0), pose(2, 0), pose(3, 0), pose(4, 0), pose(5, 0),
      pose(6, 0), pose(7, 0), pose(8, 0);
  return r;
}

Vec3 translation_from_pose_slot(const Eigen::MatrixXd& pose) {
  return Vec3(pose(9, 0), pose(10, 0), pose(11, 0));
}

}  // namespace

int GraphSpec::new_slot(Eigen::Index rows, Eigen::Index cols) {
  shapes_.push_back({rows, cols});
  return static_cast<int>(shapes_.size()) - 1;
}

void GraphSpec::check_slot(int slot) const {
  if (slot < 0 || slot >= num_slots()) {
    throw Error(ErrorCode::kInvalidConfig, "graph references unknown slot");
  }
}

int GraphSpec::add_input(Eigen::Index rows, Eigen::Index cols) {
  if (!nodes_.empty()) {
    throw Error(ErrorCode::kInvalidConfig,
                "inputs must be declared before ops");
  }
  ++num_inputs_;
  return new_slot(rows, cols);
}

int GraphSpec::add_node(OpType op, std::vector<int> inputs, OpAux aux,
                        Eigen::Index rows, Eigen::Index cols) {
  for (int s : inputs) check_slot(s);
  const int out = new_slot(rows, cols);
  nodes_.push_back(Node{op, std::move(inputs), out, std::move(aux)});
  return out;
}

int GraphSpec::add(int a, int b) {
  if (shapes_[a].rows != shapes_[b].rows || shapes_[a].cols != shapes_[b].cols)
    throw Error(ErrorCode::kShapeMismatch, "add: shape mismatch");
  return add_node(OpType::kAdd, {a, b}, {}, shapes_[a].rows, shapes_[a].cols);
}

int GraphSpec::sub(int a, int b) {
  if (shapes_[a].rows != shapes_[b].rows || shapes_[a].cols != shapes_[b].cols)
    throw Error(ErrorCode::kShapeMismatch, "sub: shape mismatch");
  return add_node(OpType::kSub, {a, b}, {}, shapes_[a].rows, shapes_[a].cols);
}

int GraphSpec::mul(int a, int b) {
  if (shapes_[a].rows != shapes_[b].rows || shapes_[a].cols != shapes_[b].cols)
    throw Error(ErrorCode::kShapeMismatch, "mul: shape mismatch");
  return add_node(OpType::kMul, {a, b}, {}, shapes_[a].rows, shapes_[a].cols);
}

int GraphSpec::affine(int x, double scale, double shift) {
  return add_node(OpType::kAffine, {x}, AffineArgs{scale, shift},
                  shapes_[x].rows, shapes_[x].cols);
}

int GraphSpec::matmul(int a, int b) {
  if (shapes_[a].cols != shapes_[b].rows)
    throw Error(ErrorCode::kShapeMismatch, "matmul: inner dimensions differ");
  return add_node(OpType::kMatMul, {a, b}, {}, shapes_[a].rows,
                  shapes_[b].cols);
}

int GraphSpec::add_bias(int m, int bias) {
  if (shapes_[bias].cols != 1 || shapes_[bias].rows != shapes_[m].rows)
    throw Error(ErrorCode::kShapeMismatch, "add_bias: bias shape mismatch");
  return add_node(OpType::kAddBias, {m, bias}, {}, shapes_[m].rows,
                  shapes_[m].cols);
}

int GraphSpec::slice_rows(int x, int begin_row, int end_row) {
  if (begin_row < 0 || end_row > shapes_[x].rows || begin_row >= end_row)
    throw Error(ErrorCode::kShapeMismatch, "slice_rows: bad row range");
  return add_node(OpType::kSliceRows, {x}, SliceArgs{begin_row, end_row},
                  end_row - begin_row, shapes_[x].cols);
}

int GraphSpec::sigmoid(int x) {
  return add_node(OpType::kSigmoid, {x}, {}, shapes_[x].rows, shapes_[x].cols);
}

int GraphSpec::tanh(int x) {
  return add_node(OpType::kTanh, {x}, {}, shapes_[x].rows, shapes_[x].cols);
}

int GraphSpec::norm(int x) { return add_node(OpType::kNorm, {x}, {}, 1, 1); }

int GraphSpec::squared_norm(int x) {
  return add_node(OpType::kSquaredNorm, {x}, {}, 1, 1);
}

int GraphSpec::sum(int x) { return add_node(OpType::kSum, {x}, {}, 1, 1); }

int GraphSpec::arccos(int x) {
  if (shapes_[x].rows != 1 || shapes_[x].cols != 1)
    throw Error(ErrorCode::kShapeMismatch, "arccos expects a scalar");
  return add_node(OpType::kArccos, {x}, {}, 1, 1);
}

int GraphSpec::back_project(int depth, const CameraIntrinsics& k,
                            const Mat3X& pixels) {
  if (shapes_[depth].rows != 1 || shapes_[depth].cols != pixels.cols())
    throw Error(ErrorCode::kShapeMismatch, "back_project: depth shape");
  return add_node(OpType::kBackProject, {depth}, BackProjectArgs{k, pixels}, 3,
                  pixels.cols());
}

int GraphSpec::transform(int points, const Pose& pose) {
  if (shapes_[points].rows != 3)
    throw Error(ErrorCode::kShapeMismatch, "transform expects 3 x M points");
  return add_node(OpType::kTransform, {points}, TransformArgs{pose}, 3,
                  shapes_[points].cols);
}

int GraphSpec::project(int points, const Pose& pose,
                       const CameraIntrinsics& k) {
  if (shapes_[points].rows != 3)
    throw Error(ErrorCode::kShapeMismatch, "project expects 3 x M points");
  return add_node(OpType::kProject, {points}, ProjectArgs{pose, k}, 2,
                  shapes_[points].cols);
}

int GraphSpec::kabsch(int camera_points, int global_points, int weights) {
  const Eigen::Index m = shapes_[weights].cols;
  if (shapes_[camera_points].rows != 3 || shapes_[global_points].rows != 3 ||
      shapes_[weights].rows != 1 || shapes_[camera_points].cols != m ||
      shapes_[global_points].cols != m)
    throw Error(ErrorCode::kShapeMismatch, "kabsch: input shapes mismatch");
  return add_node(OpType::kKabsch, {camera_points, global_points, weights}, {},
                  12, 1);
}

int GraphSpec::position_loss(int pose, const Vec3& t_gt) {
  if (shapes_[pose].rows != 12 || shapes_[pose].cols != 1)
    throw Error(ErrorCode::kShapeMismatch, "position_loss expects a pose slot");
  return add_node(OpType::kPositionLoss, {pose}, PositionLossArgs{t_gt}, 1, 1);
}

int GraphSpec::rotation_loss(int pose, const Mat3& r_gt) {
  if (shapes_[pose].rows != 12 || shapes_[pose].cols != 1)
    throw Error(ErrorCode::kShapeMismatch, "rotation_loss expects a pose slot");
  return add_node(OpType::kRotationLoss, {pose}, RotationLossArgs{r_gt}, 1, 1);
}

int GraphSpec::consistency_loss(int camera_points, int global_points,
                                const Pose& gt) {
  if (shapes_[camera_points].rows != 3 || shapes_[global_points].rows != 3 ||
      shapes_[camera_points].cols != shapes_[global_points].cols)
    throw Error(ErrorCode::kShapeMismatch, "consistency_loss: shapes");
  return add_node(OpType::kConsistencyLoss, {camera_points, global_points},
                  ConsistencyArgs{gt}, 1, 1);
}

int GraphSpec::reprojection_loss(int global_points, const Pose& gt,
                                 const CameraIntrinsics& k, const Mat2X& pixels,
                                 double behind_penalty) {
  if (shapes_[global_points].rows != 3 ||
      shapes_[global_points].cols != pixels.cols())
    throw Error(ErrorCode::kShapeMismatch, "reprojection_loss: shapes");
  return add_node(OpType::kReprojectionLoss, {global_points},
                  ReprojectionArgs{gt, k, pixels, behind_penalty}, 1, 1);
}

int GraphSpec::weighted_sum(const std::vector<int>& xs,
                            const std::vector<double>& coeffs) {
  if (xs.empty() || xs.size() != coeffs.size())
    throw Error(ErrorCode::kShapeMismatch, "weighted_sum: arity mismatch");
  for (int x : xs) {
    if (shapes_[x].rows != 1 || shapes_[x].cols != 1)
      throw Error(ErrorCode::kShapeMismatch, "weighted_sum expects scalars");
  }
  return add_node(OpType::kWeightedSum, xs, WeightedSumArgs{coeffs}, 1, 1);
}

void GraphSpec::set_output(int slot) {
  check_slot(slot);
  if (shapes_[slot].rows != 1 || shapes_[slot].cols != 1)
    throw Error(ErrorCode::kShapeMismatch, "output must be a scalar slot");
  output_ = slot;
}

namespace {

// One forward step; fills value, and optionally trace / behind mask.
void eval_node(const Node& node, const GraphSpec& spec,
               std::vector<Eigen::MatrixXd>& values,
               std::shared_ptr<AlignmentTrace>* trace_out,
               std::vector<uint8_t>* mask_out) {
  const auto& in = node.inputs;
  Eigen::MatrixXd& out = values[node.out];
  switch (node.op) {
    case OpType::kAdd:
      out = values[in[0]] + values[in[1]];
      break;
    case OpType::kSub:
      out = values[in[0]] - values[in[1]];
      break;
    case OpType::kMul:
      out = values[in[0]].cwiseProduct(values[in[1]]);
      break;
    case OpType::kAffine: {
      const auto& a = std::get<AffineArgs>(node.aux);
      out = (a.scale * values[in[0]]).array() + a.shift;
      break;
    }
    case OpType::kMatMul:
      out = values[in[0]] * values[in[1]];
      break;
    case OpType::kAddBias:
      out = values[in[0]].colwise() + Eigen::VectorXd(values[in[1]].col(0));
      break;
    case OpType::kSliceRows: {
      const auto& a = std::get<SliceArgs>(node.aux);
      out = values[in[0]].middleRows(a.begin_row, a.end_row - a.begin_row);
      break;
    }
    case OpType::kSigmoid:
      out = (1.0 / (1.0 + (-values[in[0]].array()).exp())).matrix();
      break;
    case OpType::kTanh:
      out = values[in[0]].array().tanh().matrix();
      break;
    case OpType::kNorm: {
      out.resize(1, 1);
      out(0, 0) = values[in[0]].norm();
      break;
    }
    case OpType::kSquaredNorm: {
      out.resize(1, 1);
      out(0, 0) = values[in[0]].squaredNorm();
      break;
    }
    case OpType::kSum: {
      out.resize(1, 1);
      out(0, 0) = values[in[0]].sum();
      break;
    }
    case OpType::kArccos: {
      out.resize(1, 1);
      const double x = std::min(1.0, std::max(-1.0, values[in[0]](0, 0)));
      out(0, 0) = std::acos(x);
      break;
    }
    case OpType::kBackProject: {
      const auto& a = std::get<BackProjectArgs>(node.aux);
      out.resize(3, a.pixels.cols());
      for (Eigen::Index i = 0; i < a.pixels.cols(); ++i) {
        out.col(i) =
            values[in[0]](0, i) * a.k.ray(a.pixels(0, i), a.pixels(1, i));
      }
      break;
    }
    case OpType::kTransform: {
      const auto& a = std::get<TransformArgs>(node.aux);
      out = (a.pose.rotation * values[in[0]]).colwise() + a.pose.translation;
      break;
    }
    case OpType::kProject: {
      const auto& a = std::get<ProjectArgs>(node.aux);
      const Eigen::MatrixXd& pts = values[in[0]];
      out.resize(2, pts.cols());
      for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const Vec3 x = a.pose.apply(pts.col(i));
        if (x.z() <= kBehindCameraEps)
          throw Error(ErrorCode::kBehindCamera,
                      "project op: point behind camera");
        out(0, i) = a.k.fx * x.x() / x.z() + a.k.cx;
        out(1, i) = a.k.fy * x.y() / x.z() + a.k.cy;
      }
      break;
    }
    case OpType::kKabsch: {
      const Eigen::MatrixXd& c = values[in[0]];
      const Eigen::MatrixXd& g = values[in[1]];
      const VecX w = values[in[2]].row(0).transpose();
      auto [pose, trace] = weighted_kabsch(c, g, w);
      if (trace_out) *trace_out = std::make_shared<AlignmentTrace>(std::move(trace));
      out.resize(12, 1);
      for (int r = 0; r < 3; ++r)
        for (int cidx = 0; cidx < 3; ++cidx)
          out(r * 3 + cidx, 0) = pose.rotation(r, cidx);
      out.block<3, 1>(9, 0) = pose.translation;
      break;
    }
    case OpType::kPositionLoss: {
      const auto& a = std::get<PositionLossArgs>(node.aux);
      out.resize(1, 1);
      out(0, 0) = (a.t_gt - translation_from_pose_slot(values[in[0]])).norm();
      break;
    }
    case OpType::kRotationLoss: {
      const auto& a = std::get<RotationLossArgs>(node.aux);
      const Mat3 r_hat = rotation_from_pose_slot(values[in[0]]);
      const double x = 0.5 * ((r_hat * a.r_gt.transpose()).trace() - 1.0);
      out.resize(1, 1);
      out(0, 0) = std::acos(std::min(1.0, std::max(-1.0, x)));
      break;
    }
    case OpType::kConsistencyLoss: {
      const auto& a = std::get<ConsistencyArgs>(node.aux);
      const Eigen::MatrixXd& c = values[in[0]];
      const Eigen::MatrixXd& g = values[in[1]];
      double total = 0.0;
      for (Eigen::Index i = 0; i < c.cols(); ++i) {
        total += (Vec3(g.col(i)) - a.gt.apply(c.col(i))).norm();
      }
      out.resize(1, 1);
      out(0, 0) = total / static_cast<double>(c.cols());
      break;
    }
    case OpType::kReprojectionLoss: {
      const auto& a = std::get<ReprojectionArgs>(node.aux);
      const Eigen::MatrixXd& g = values[in[0]];
      const Pose inv = kloc::invert(a.gt);
      if (mask_out) mask_out->assign(static_cast<size_t>(g.cols()), 0);
      double total = 0.0;
      for (Eigen::Index i = 0; i < g.cols(); ++i) {
        const Vec3 x = inv.apply(g.col(i));
        if (x.z() <= kBehindCameraEps) {
          total += a.behind_penalty;
          if (mask_out) (*mask_out)[static_cast<size_t>(i)] = 1;
          continue;
        }
        const double du = a.k.fx * x.x() / x.z() + a.k.cx - a.pixels(0, i);
        const double dv = a.k.fy * x.y() / x.z() + a.k.cy - a.pixels(1, i);
        total += std::sqrt(du * du + dv * dv);
      }
      out.resize(1, 1);
      out(0, 0) = total / static_cast<double>(g.cols());
      break;
    }
    case OpType::kWeightedSum: {
      const auto& a = std::get<WeightedSumArgs>(node.aux);
      double total = 0.0;
      for (size_t j = 0; j < in.size(); ++j)
        total += a.coeffs[j] * values[in[j]](0, 0);
      out.resize(1, 1);
      out(0, 0) = total;
      break;
    }
    default:
      throw Error(ErrorCode::kInvalidConfig, "op outside vocabulary");
  }
  (void)spec;
}

}  // namespace

Tape record_forward(const GraphSpec& spec,
                    const std::vector<Eigen::MatrixXd>& inputs) {
  if (spec.output_slot() < 0)
    throw Error(ErrorCode::kInvalidConfig, "graph has no output");
  if (static_cast<int>(inputs.size()) != spec.num_inputs())
    throw Error(ErrorCode::kShapeMismatch, "wrong number of graph inputs");

  Tape tape;
  tape.spec = spec;
  tape.values.resize(static_cast<size_t>(spec.num_slots()));
  for (int i = 0; i < spec.num_inputs(); ++i) {
    const auto& sh = spec.shape(i);
    if (inputs[static_cast<size_t>(i)].rows() != sh.rows ||
        inputs[static_cast<size_t>(i)].cols() != sh.cols)
      throw Error(ErrorCode::kShapeMismatch, "graph input shape mismatch");
    tape.values[static_cast<size_t>(i)] = inputs[static_cast<size_t>(i)];
  }
  tape.traces.resize(spec.nodes().size());
  tape.behind_masks.resize(spec.nodes().size());
  for (size_t n = 0; n < spec.nodes().size(); ++n) {
    eval_node(spec.nodes()[n], spec, tape.values, &tape.traces[n],
              &tape.behind_masks[n]);
  }
  return tape;
}

double Tape::replay() const {
  std::vector<Eigen::MatrixXd> vals(values.begin(),
                                    values.begin() + spec.num_inputs());
  vals.resize(static_cast<size_t>(spec.num_slots()));
  for (const auto& node : spec.nodes()) {
    eval_node(node, spec, vals, nullptr, nullptr);
  }
  return vals[static_cast<size_t>(spec.output_slot())](0, 0);
}

KabschAdjoints kabsch_vjp(const AlignmentTrace& trace, const Mat3& d_rotation,
                          const Vec3& d_translation) {
  const Eigen::Index m = trace.weights.size();
  const Vec3& sv = trace.singular_values;
  const double s_max = sv[0];
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (std::abs(sv[i] - sv[j]) < kSvdGapRel * s_max) {
        throw Error(ErrorCode::kDegenerateGradient,
                    "singular-value gap below threshold");
      }
    }
  }

  Mat3 d = Mat3::Identity();
  d(2, 2) = trace.sign;
  const Mat3 rotation = trace.v * d * trace.u.transpose();

  // t = -R mu_c + mu_g
  const Mat3 r_bar_total = d_rotation - d_translation * trace.mu_c.transpose();
  const Vec3 mu_c_direct = -(rotation.transpose() * d_translation);
  const Vec3 mu_g_direct = d_translation;

  // R = V D Uᵀ (s treated as constant; it is piecewise constant).
  const Mat3 v_bar = r_bar_total * trace.u * d;
  const Mat3 u_bar = r_bar_total.transpose() * trace.v * d;

  // SVD vector-Jacobian product for a square matrix with distinct σ:
  //   Ā = U [ (F ∘ (UᵀŪ - ŪᵀU)) S + S (F ∘ (VᵀV̄ - V̄ᵀV)) ] Vᵀ,
  //   F_ij = 1 / (σ_j² - σ_i²).
  Mat3 f = Mat3::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i != j) f(i, j) = 1.0 / (sv[j] * sv[j] - sv[i] * sv[i]);
    }
  }
  const Mat3 utu = trace.u.transpose() * u_bar;
  const Mat3 vtv = trace.v.transpose() * v_bar;
  const Mat3 s_diag = sv.asDiagonal();
  const Mat3 inner = (f.cwiseProduct(utu - utu.transpose())) * s_diag +
                     s_diag * (f.cwiseProduct(vtv - vtv.transpose()));
  const Mat3 a_bar = trace.u * inner * trace.v.transpose();

  KabschAdjoints adj;
  adj.d_camera.resize(3, m);
  adj.d_global.resize(3, m);
  adj.d_weights.resize(m);

  // A = Σ w_i c̄_i ḡ_iᵀ, then undo the centering.
  Vec3 sum_c_adj = Vec3::Zero();
  Vec3 sum_g_adj = Vec3::Zero();
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vec3 c_bar_adj = trace.weights[i] * (a_bar * trace.g_bar.col(i));
    const Vec3 g_bar_adj =
        trace.weights[i] * (a_bar.transpose() * trace.c_bar.col(i));
    adj.d_camera.col(i) = c_bar_adj;
    adj.d_global.col(i) = g_bar_adj;
    adj.d_weights[i] = trace.c_bar.col(i).dot(a_bar * trace.g_bar.col(i));
    sum_c_adj += c_bar_adj;
    sum_g_adj += g_bar_adj;
  }
  const Vec3 mu_c_total = mu_c_direct - sum_c_adj;
  const Vec3 mu_g_total = mu_g_direct - sum_g_adj;
  const double w_sum = trace.weight_sum;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double wf = trace.weights[i] / w_sum;
    adj.d_camera.col(i) += wf * mu_c_total;
    adj.d_global.col(i) += wf * mu_g_total;
    adj.d_weights[i] += (mu_c_total.dot(trace.c_bar.col(i)) +
                         mu_g_total.dot(trace.g_bar.col(i))) /
                        w_sum;
  }
  return adj;
}

namespace {

void backward_node(const Node& node, Tape& tape, size_t node_index) {
  auto& values = tape.values;
  auto& adjoints = tape.adjoints;
  const auto& in = node.inputs;
  const Eigen::MatrixXd& out_adj = adjoints[node.out];
  switch (node.op) {
    case OpType::kAdd:
      adjoints[in[0]] += out_adj;
      adjoints[in[1]] += out_adj;
      break;
    case OpType::kSub:
      adjoints[in[0]] += out_adj;
      adjoints[in[1]] -= out_adj;
      break;
    case OpType::kMul:
      adjoints[in[0]] += out_adj.cwiseProduct(values[in[1]]);
      adjoints[in[1]] += out_adj.cwiseProduct(values[in[0]]);
      break;
    case OpType::kAffine: {
      const auto& a = std::get<AffineArgs>(node.aux);
      adjoints[in[0]] += a.scale * out_adj;
      break;
    }
    case OpType::kMatMul:
      adjoints[in[0]] += out_adj * values[in[1]].transpose();
      adjoints[in[1]] += values[in[0]].transpose() * out_adj;
      break;
    case OpType::kAddBias:
      adjoints[in[0]] += out_adj;
      adjoints[in[1]] += out_adj.rowwise().sum();
      break;
    case OpType::kSliceRows: {
      const auto& a = std::get<SliceArgs>(node.aux);
      adjoints[in[0]].middleRows(a.begin_row, a.end_row - a.begin_row) +=
          out_adj;
      break;
    }
    case OpType::kSigmoid: {
      const auto& s = values[node.out].array();
      adjoints[in[0]] += (out_adj.array() * s * (1.0 - s)).matrix();
      break;
    }
    case OpType::kTanh: {
      const auto& t = values[node.out].array();
      adjoints[in[0]] += (out_adj.array() * (1.0 - t * t)).matrix();
      break;
    }
    case OpType::kNorm: {
      const double n = values[node.out](0, 0);
      if (n > 0.0) adjoints[in[0]] += (out_adj(0, 0) / n) * values[in[0]];
      break;  // gradient defined as zero at zero
    }
    case OpType::kSquaredNorm:
      adjoints[in[0]] += 2.0 * out_adj(0, 0) * values[in[0]];
      break;
    case OpType::kSum:
      adjoints[in[0]].array() += out_adj(0, 0);
      break;
    case OpType::kArccos: {
      const double x = std::min(1.0 - kArccosClamp,
                                std::max(-1.0 + kArccosClamp, values[in[0]](0, 0)));
      adjoints[in[0]](0, 0) += out_adj(0, 0) * (-1.0 / std::sqrt(1.0 - x * x));
      break;
    }
    case OpType::kBackProject: {
      const auto& a = std::get<BackProjectArgs>(node.aux);
      for (Eigen::Index i = 0; i < a.pixels.cols(); ++i) {
        adjoints[in[0]](0, i) +=
            a.k.ray(a.pixels(0, i), a.pixels(1, i)).dot(out_adj.col(i));
      }
      break;
    }
    case OpType::kTransform: {
      const auto& a = std::get<TransformArgs>(node.aux);
      adjoints[in[0]] += a.pose.rotation.transpose() * out_adj;
      break;
    }
    case OpType::kProject: {
      const auto& a = std::get<ProjectArgs>(node.aux);
      const Eigen::MatrixXd& pts = values[in[0]];
      for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const Vec3 x = a.pose.apply(pts.col(i));
        Eigen::Matrix<double, 2, 3> jac;
        jac << a.k.fx / x.z(), 0.0, -a.k.fx * x.x() / (x.z() * x.z()), 0.0,
            a.k.fy / x.z(), -a.k.fy * x.y() / (x.z() * x.z());
        adjoints[in[0]].col(i) +=
            a.pose.rotation.transpose() * (jac.transpose() * out_adj.col(i));
      }
      break;
    }
    case OpType::kKabsch: {
      const auto& trace = tape.traces[node_index];
      Mat3 d_rot;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) d_rot(r, c) = out_adj(r * 3 + c, 0);
      const Vec3 d_t(out_adj(9, 0), out_adj(10, 0), out_adj(11, 0));
      const KabschAdjoints adj = kabsch_vjp(*trace, d_rot, d_t);
      adjoints[in[0]] += adj.d_camera;
      adjoints[in[1]] += adj.d_global;
      adjoints[in[2]] += adj.d_weights.transpose();
      break;
    }
    case OpType::kPositionLoss: {
      const auto& a = std::get<PositionLossArgs>(node.aux);
      const Vec3 t_hat = translation_from_pose_slot(values[in[0]]);
      const double n = values[node.out](0, 0);
      if (n > 0.0) {
        const Vec3 g = (t_hat - a.t_gt) / n * out_adj(0, 0);
        adjoints[in[0]].block<3, 1>(9, 0) += g;
      }
      break;
    }
    case OpType::kRotationLoss: {
      const auto& a = std::get<RotationLossArgs>(node.aux);
      const Mat3 r_hat = rotation_from_pose_slot(values[in[0]]);
      double x = 0.5 * ((r_hat * a.r_gt.transpose()).trace() - 1.0);
      x = std::min(1.0 - kArccosClamp, std::max(-1.0 + kArccosClamp, x));
      const double darc = -1.0 / std::sqrt(1.0 - x * x);
      const Mat3 g = (0.5 * darc * out_adj(0, 0)) * a.r_gt;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) adjoints[in[0]](r * 3 + c, 0) += g(r, c);
      break;
    }
    case OpType::kConsistencyLoss: {
      const auto& a = std::get<ConsistencyArgs>(node.aux);
      const Eigen::MatrixXd& c = values[in[0]];
      const Eigen::MatrixXd& g = values[in[1]];
      const double scale = out_adj(0, 0) / static_cast<double>(c.cols());
      for (Eigen::Index i = 0; i < c.cols(); ++i) {
        const Vec3 e = Vec3(g.col(i)) - a.gt.apply(c.col(i));
        const double n = e.norm();
        if (n == 0.0) continue;
        const Vec3 unit = e / n;
        adjoints[in[1]].col(i) += scale * unit;
        adjoints[in[0]].col(i) -= scale * (a.gt.rotation.transpose() * unit);
      }
      break;
    }
    case OpType::kReprojectionLoss: {
      const auto& a = std::get<ReprojectionArgs>(node.aux);
      const Eigen::MatrixXd& g = values[in[0]];
      const Pose inv = kloc::invert(a.gt);
      const auto& mask = tape.behind_masks[node_index];
      const double scale = out_adj(0, 0) / static_cast<double>(g.cols());
      for (Eigen::Index i = 0; i < g.cols(); ++i) {
        if (mask[static_cast<size_t>(i)]) continue;  // constant penalty term
        const Vec3 x = inv.apply(g.col(i));
        const double du = a.k.fx * x.x() / x.z() + a.k.cx - a.pixels(0, i);
        const double dv = a.k.fy * x.y() / x.z() + a.k.cy - a.pixels(1, i);
        const double n = std::sqrt(du * du + dv * dv);
        if (n == 0.0) continue;
        Eigen::Matrix<double, 2, 3> jac;
        jac << a.k.fx / x.z(), 0.0, -a.k.fx * x.x() / (x.z() * x.z()), 0.0,
            a.k.fy / x.z(), -a.k.fy * x.y() / (x.z() * x.z());
        const Eigen::Vector2d unit(du / n, dv / n);
        adjoints[in[0]].col(i) +=
            scale * (inv.rotation.transpose() * (jac.transpose() * unit));
      }
      break;
    }
    case OpType::kWeightedSum: {
      const auto& a = std::get<WeightedSumArgs>(node.aux);
      for (size_t j = 0; j < in.size(); ++j)
        adjoints[in[j]](0, 0) += a.coeffs[j] * out_adj(0, 0);
      break;
    }
    default:
      throw Error(ErrorCode::kInvalidConfig, "op outside vocabulary");
  }
}

}  // namespace

void backward(Tape& tape) {
  const auto& spec = tape.spec;
  tape.adjoints.assign(static_cast<size_t>(spec.num_slots()),
                       Eigen::MatrixXd());
  for (int s = 0; s < spec.num_slots(); ++s) {
    tape.adjoints[static_cast<size_t>(s)] =
        Eigen::MatrixXd::Zero(spec.shape(s).rows, spec.shape(s).cols);
  }
  tape.adjoints[static_cast<size_t>(spec.output_slot())](0, 0) = 1.0;
  for (size_t n = spec.nodes().size(); n-- > 0;) {
    backward_node(spec.nodes()[n], tape, n);
  }
}

double finite_diff_check(const GraphSpec& spec,
                         const std::vector<Eigen::MatrixXd>& inputs,
                         double step,
                         const std::vector<int>* check_inputs) {
  if (!(step > 0.0))
    throw Error(ErrorCode::kInvalidConfig, "finite difference step must be > 0");
  Tape tape = record_forward(spec, inputs);
  backward(tape);

  std::vector<int> which;
  if (check_inputs) {
    which = *check_inputs;
  } else {
    for (int i = 0; i < spec.num_inputs(); ++i) which.push_back(i);
  }

  double max_rel = 0.0;
  std::vector<Eigen::MatrixXd> perturbed = inputs;
  for (int slot : which) {
    auto& m = perturbed[static_cast<size_t>(slot)];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double saved = m(r, c);
        m(r, c) = saved + step;
        const double up = record_forward(spec, perturbed).loss();
        m(r, c) = saved - step;
        const double down = record_forward(spec, perturbed).loss();
        m(r, c) = saved;
        const double fd = (up - down) / (2.0 * step);
        const double an = tape.adjoints[static_cast<size_t>(slot)](r, c);
        const double rel =
            std::abs(an - fd) / std::max(1e-6, std::abs(an) + std::abs(fd));
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  return max_rel;
}

}  // namespace kloc::diff
