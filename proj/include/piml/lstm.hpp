#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace piml {

enum class Activation { Tanh, Identity };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& text);

struct LstmShape {
  int input_dim = 14;
  int hidden = 12;
  int mlp_hidden = 12;
  int seq_len = 20;
  Activation head_activation = Activation::Tanh;

  bool operator==(const LstmShape&) const = default;
};

// Offsets of each tensor inside the flat parameter vector. Gate blocks are
// stacked in the order input, forget, cell, output; matrices are column-major.
struct ParamLayout {
  std::size_t wx, wh, b, w1, b1, w2, b2, total;
  static ParamLayout of(const LstmShape& shape);
};

template <typename Scalar>
struct TensorViews {
  using Mat = Eigen::Map<Eigen::Matrix<std::remove_const_t<Scalar>, Eigen::Dynamic, Eigen::Dynamic>>;
  using Vec = Eigen::Map<Eigen::Matrix<std::remove_const_t<Scalar>, Eigen::Dynamic, 1>>;
  using ConstMat = Eigen::Map<const Eigen::Matrix<std::remove_const_t<Scalar>, Eigen::Dynamic, Eigen::Dynamic>>;
  using ConstVec = Eigen::Map<const Eigen::Matrix<std::remove_const_t<Scalar>, Eigen::Dynamic, 1>>;
  using M = std::conditional_t<std::is_const_v<Scalar>, ConstMat, Mat>;
  using V = std::conditional_t<std::is_const_v<Scalar>, ConstVec, Vec>;

  M wx;  // 4H x D
  M wh;  // 4H x H
  V b;   // 4H
  M w1;  // M x H
  V b1;  // M
  M w2;  // 1 x M
  Scalar& b2;

  TensorViews(const LstmShape& s, Scalar* data)
      : wx(data + ParamLayout::of(s).wx, 4 * s.hidden, s.input_dim),
        wh(data + ParamLayout::of(s).wh, 4 * s.hidden, s.hidden),
        b(data + ParamLayout::of(s).b, 4 * s.hidden),
        w1(data + ParamLayout::of(s).w1, s.mlp_hidden, s.hidden),
        b1(data + ParamLayout::of(s).b1, s.mlp_hidden),
        w2(data + ParamLayout::of(s).w2, 1, s.mlp_hidden),
        b2(data[ParamLayout::of(s).b2]) {}
};

// Single-layer LSTM over a fixed-length window followed by a two-layer MLP on
// the final hidden state. All parameters live in one flat vector.
class LstmModel {
 public:
  LstmModel() = default;
  explicit LstmModel(const LstmShape& shape);  // all-zero parameters

  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per tensor, forget-gate bias 1
  static LstmModel initialized(const LstmShape& shape, std::uint64_t seed);

  const LstmShape& shape() const { return shape_; }
  std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  TensorViews<double> views() { return {shape_, params_.data()}; }
  TensorViews<const double> views() const { return {shape_, params_.data()}; }

  bool all_finite() const { return params_.allFinite(); }

 private:
  LstmShape shape_;
  Eigen::VectorXd params_;
};

// seq_len matrices of input_dim x B; column b of every step belongs to sample b.
struct Batch {
  std::vector<Eigen::MatrixXd> steps;
  Eigen::VectorXd targets;

  int size() const { return static_cast<int>(targets.size()); }
};

// Windows are seq_len x input_dim (one row per timestep).
Batch make_batch(std::span<const Eigen::MatrixXd* const> windows, std::span<const double> targets);
Batch make_batch(const std::vector<Eigen::MatrixXd>& windows, std::span<const double> targets);

struct ForwardCache {
  std::vector<Eigen::MatrixXd> in_gate, forget_gate, cell_gate, out_gate;
  std::vector<Eigen::MatrixXd> cell, cell_tanh, hidden;  // index t+1 holds step t; index 0 is the zero state
  Eigen::MatrixXd head_pre, head_act;
  Eigen::RowVectorXd prediction;
};

// Predictions for every sample in the batch. Throws ShapeMismatch.
Eigen::RowVectorXd forward_batch(const LstmModel& model, const Batch& batch, ForwardCache* cache = nullptr);

struct Prediction {
  double value = 0.0;
  ForwardCache cache;
};
Prediction forward(const LstmModel& model, const Eigen::MatrixXd& window);

// (1/B) sum of squared errors. Throws EmptyBatch / ShapeMismatch.
double mse_loss(std::span<const double> predictions, std::span<const double> targets);

struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd grad;  // same layout as LstmModel::params()
};

// Exact gradient of the batch MSE by backpropagation through time.
LossGradient backward(const LstmModel& model, const Batch& batch);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central differences of mse_loss over every parameter against backward().
// Error per parameter is |a - n| / max(|a|, |n|, 1): relative for gradients
// above one, absolute below. Central differences at step 1e-5 carry ~1e-9 of
// rounding noise, which a bare ratio would blow up on near-zero gradients.
inline constexpr double kGradCheckFloor = 1.0;
GradCheckResult grad_check(const LstmModel& model, const Batch& batch, double fd_step);

}  // namespace piml
