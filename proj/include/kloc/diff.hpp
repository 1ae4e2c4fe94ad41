#pragma once

#include <Eigen/Core>
#include <memory>
#include <variant>
#include <vector>

#include "kloc/alignment.hpp"
#include "kloc/geometry.hpp"

namespace kloc::diff {

// Fixed op vocabulary. The pipeline shape is known up front, so this is a
// recorded straight-line program rather than a general autodiff system.
enum class OpType {
  kAdd,
  kSub,
  kMul,
  kAffine,
  kMatMul,
  kAddBias,
  kSliceRows,
  kSigmoid,
  kTanh,
  kNorm,
  kSquaredNorm,
  kSum,
  kArccos,
  kBackProject,
  kTransform,
  kProject,
  kKabsch,
  kPositionLoss,
  kRotationLoss,
  kConsistencyLoss,
  kReprojectionLoss,
  kWeightedSum,
};

struct AffineArgs {
  double scale = 1.0;
  double shift = 0.0;
};
struct SliceArgs {
  int begin_row = 0;
  int end_row = 0;
};
struct BackProjectArgs {
  CameraIntrinsics k;
  Mat3X pixels;  // homogeneous
};
struct TransformArgs {
  Pose pose;
};
struct ProjectArgs {
  Pose pose;
  CameraIntrinsics k;
};
struct PositionLossArgs {
  Vec3 t_gt;
};
struct RotationLossArgs {
  Mat3 r_gt;
};
struct ConsistencyArgs {
  Pose gt;
};
struct ReprojectionArgs {
  Pose gt;
  CameraIntrinsics k;
  Mat2X pixels;           // observed 2D pixels
  double behind_penalty = 0.0;
};
struct WeightedSumArgs {
  std::vector<double> coeffs;
};

using OpAux =
    std::variant<std::monostate, AffineArgs, SliceArgs, BackProjectArgs,
                 TransformArgs, ProjectArgs, PositionLossArgs, RotationLossArgs,
                 ConsistencyArgs, ReprojectionArgs, WeightedSumArgs>;

struct Node {
  OpType op;
  std::vector<int> inputs;
  int out = -1;
  OpAux aux;
};

struct SlotShape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

// Declarative program over slots. Slots [0, num_inputs) are the leaves, each
// node appends exactly one output slot. Shapes are checked at build time.
class GraphSpec {
 public:
  int add_input(Eigen::Index rows, Eigen::Index cols);

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int affine(int x, double scale, double shift);
  int matmul(int a, int b);
  int add_bias(int m, int bias);
  int slice_rows(int x, int begin_row, int end_row);
  int sigmoid(int x);
  int tanh(int x);
  int norm(int x);
  int squared_norm(int x);
  int sum(int x);
  int arccos(int x);
  int back_project(int depth, const CameraIntrinsics& k, const Mat3X& pixels);
  int transform(int points, const Pose& pose);
  int project(int points, const Pose& pose, const CameraIntrinsics& k);
  // Pose slot layout: rows 0..8 = rotation (row-major), rows 9..11 = t.
  int kabsch(int camera_points, int global_points, int weights);
  int position_loss(int pose, const Vec3& t_gt);
  int rotation_loss(int pose, const Mat3& r_gt);
  int consistency_loss(int camera_points, int global_points, const Pose& gt);
  int reprojection_loss(int global_points, const Pose& gt,
                        const CameraIntrinsics& k, const Mat2X& pixels,
                        double behind_penalty);
  int weighted_sum(const std::vector<int>& xs, const std::vector<double>& coeffs);

  void set_output(int slot);

  int num_inputs() const { return num_inputs_; }
  int num_slots() const { return static_cast<int>(shapes_.size()); }
  int output_slot() const { return output_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const SlotShape& shape(int slot) const { return shapes_[slot]; }

 private:
  int new_slot(Eigen::Index rows, Eigen::Index cols);
  int add_node(OpType op, std::vector<int> inputs, OpAux aux,
               Eigen::Index rows, Eigen::Index cols);
  void check_slot(int slot) const;

  int num_inputs_ = 0;
  int output_ = -1;
  std::vector<SlotShape> shapes_;
  std::vector<Node> nodes_;
};

// Forward-pass record: slot values plus per-node state needed by backward.
struct Tape {
  GraphSpec spec;
  std::vector<Eigen::MatrixXd> values;
  std::vector<Eigen::MatrixXd> adjoints;  // sized by backward()
  std::vector<std::shared_ptr<AlignmentTrace>> traces;   // per node or null
  std::vector<std::vector<uint8_t>> behind_masks;        // per node

  double loss() const { return values[spec.output_slot()](0, 0); }
  // Re-executes the recorded program from the stored leaf values.
  double replay() const;
};

Tape record_forward(const GraphSpec& spec,
                    const std::vector<Eigen::MatrixXd>& inputs);

// Populates adjoints for every slot, seeding the scalar output with 1.
void backward(Tape& tape);

// Adjoints of the trainer-facing leaves; filled by the pipeline builders.
struct GradientBundle {
  Eigen::MatrixXd d_depth;    // 1 x M
  Eigen::MatrixXd d_global;   // 3 x M
  Eigen::MatrixXd d_weights;  // 1 x M
  VecX d_params;              // flat parameter gradient (mlp mode)
};

struct KabschAdjoints {
  Mat3X d_camera;
  Mat3X d_global;
  VecX d_weights;
};

// Vector-Jacobian product of the weighted Kabsch map. Cross-coupling factors
// 1/(σ_j² - σ_i²) blow up for repeated singular values, so a gap below
// 1e-6 * σ_max raises kDegenerateGradient; callers skip or damp the sample.
KabschAdjoints kabsch_vjp(const AlignmentTrace& trace, const Mat3& d_rotation,
                          const Vec3& d_translation);

// Max relative error between backward() and central differences on every
// coordinate of every input (or of `check_inputs` when given).
double finite_diff_check(const GraphSpec& spec,
                         const std::vector<Eigen::MatrixXd>& inputs,
                         double step,
                         const std::vector<int>* check_inputs = nullptr);

}  // namespace kloc::diff
