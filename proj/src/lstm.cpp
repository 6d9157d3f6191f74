#include "piml/lstm.hpp"

#include <cmath>

#include "piml/error.hpp"
#include "piml/random.hpp"

namespace piml {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) {
    // split by sign so exp() never overflows
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Eigen::MatrixXd tanh_of(const Eigen::MatrixXd& z) { return z.array().tanh().matrix(); }

void check_batch(const LstmShape& shape, const Batch& batch) {
  if (batch.size() == 0) throw EmptyBatch();
  if (static_cast<int>(batch.steps.size()) != shape.seq_len)
    throw ShapeMismatch("batch has " + std::to_string(batch.steps.size()) + " timesteps, model expects " +
                        std::to_string(shape.seq_len));
  for (const auto& x : batch.steps) {
    if (x.rows() != shape.input_dim || x.cols() != batch.size())
      throw ShapeMismatch("step input is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                          ", expected " + std::to_string(shape.input_dim) + "x" + std::to_string(batch.size()));
  }
}

}  // namespace

const char* to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "identity"; }

Activation activation_from_string(const std::string& text) {
  if (text == "tanh") return Activation::Tanh;
  if (text == "identity" || text == "linear") return Activation::Identity;
  throw ParseError("unknown activation '" + text + "'");
}

ParamLayout ParamLayout::of(const LstmShape& s) {
  ParamLayout l{};
  const std::size_t g = 4 * static_cast<std::size_t>(s.hidden);
  std::size_t at = 0;
  l.wx = at;
  at += g * s.input_dim;
  l.wh = at;
  at += g * s.hidden;
  l.b = at;
  at += g;
  l.w1 = at;
  at += static_cast<std::size_t>(s.mlp_hidden) * s.hidden;
  l.b1 = at;
  at += s.mlp_hidden;
  l.w2 = at;
  at += s.mlp_hidden;
  l.b2 = at;
  at += 1;
  l.total = at;
  return l;
}

LstmModel::LstmModel(const LstmShape& shape) : shape_(shape) {
  if (shape.input_dim < 1 || shape.hidden < 1 || shape.mlp_hidden < 1 || shape.seq_len < 1)
    throw InvalidArgument("LSTM dimensions must be positive");
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ParamLayout::of(shape).total));
}

LstmModel LstmModel::initialized(const LstmShape& shape, std::uint64_t seed) {
  LstmModel m(shape);
  Rng rng(seed);
  auto fill = [&](auto&& tensor, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index j = 0; j < tensor.cols(); ++j)
      for (Eigen::Index i = 0; i < tensor.rows(); ++i) tensor(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
  };
  auto v = m.views();
  const double lstm_fan_in = shape.input_dim + shape.hidden;
  fill(v.wx, shape.input_dim);
  fill(v.wh, shape.hidden);
  fill(v.b, lstm_fan_in);
  v.b.segment(shape.hidden, shape.hidden).setOnes();
  fill(v.w1, shape.hidden);
  fill(v.b1, shape.hidden);
  fill(v.w2, shape.mlp_hidden);
  v.b2 = (2.0 * rng.uniform() - 1.0) / std::sqrt(static_cast<double>(shape.mlp_hidden));
  return m;
}

Batch make_batch(std::span<const Eigen::MatrixXd* const> windows, std::span<const double> targets) {
  if (windows.empty()) throw EmptyBatch();
  if (windows.size() != targets.size()) throw ShapeMismatch("window and target counts differ");
  const auto rows = windows.front()->rows();
  const auto cols = windows.front()->cols();
  Batch batch;
  batch.targets = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));
  const auto n = static_cast<Eigen::Index>(windows.size());
  batch.steps.assign(static_cast<std::size_t>(rows), Eigen::MatrixXd(cols, n));
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto& w = *windows[b];
    if (w.rows() != rows || w.cols() != cols) throw ShapeMismatch("windows in a batch differ in shape");
    for (Eigen::Index t = 0; t < rows; ++t) batch.steps[t].col(b) = w.row(t).transpose();
  }
  return batch;
}

Batch make_batch(const std::vector<Eigen::MatrixXd>& windows, std::span<const double> targets) {
  std::vector<const Eigen::MatrixXd*> ptrs;
  ptrs.reserve(windows.size());
  for (const auto& w : windows) ptrs.push_back(&w);
  return make_batch(std::span<const Eigen::MatrixXd* const>(ptrs), targets);
}

Eigen::RowVectorXd forward_batch(const LstmModel& model, const Batch& batch, ForwardCache* cache) {
  const auto& s = model.shape();
  check_batch(s, batch);
  const auto p = model.views();
  const int H = s.hidden;
  const Eigen::Index B = batch.size();

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(H, B);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(H, B);
  if (cache) {
    *cache = ForwardCache{};
    cache->cell.push_back(c);
    cache->cell_tanh.push_back(c);
    cache->hidden.push_back(h);
  }
  Eigen::MatrixXd z(4 * H, B);
  for (int t = 0; t < s.seq_len; ++t) {
    z.noalias() = p.wx * batch.steps[t];
    z.noalias() += p.wh * h;
    z.colwise() += p.b;
    Eigen::MatrixXd i = sigmoid(z.middleRows(0, H));
    Eigen::MatrixXd f = sigmoid(z.middleRows(H, H));
    Eigen::MatrixXd g = tanh_of(z.middleRows(2 * H, H));
    Eigen::MatrixXd o = sigmoid(z.middleRows(3 * H, H));
    c = (f.array() * c.array() + i.array() * g.array()).matrix();
    Eigen::MatrixXd tc = tanh_of(c);
    h = (o.array() * tc.array()).matrix();
    if (cache) {
      cache->in_gate.push_back(std::move(i));
      cache->forget_gate.push_back(std::move(f));
      cache->cell_gate.push_back(std::move(g));
      cache->out_gate.push_back(std::move(o));
      cache->cell.push_back(c);
      cache->cell_tanh.push_back(std::move(tc));
      cache->hidden.push_back(h);
    }
  }
  Eigen::MatrixXd pre = p.w1 * h;
  pre.colwise() += p.b1;
  Eigen::MatrixXd act = s.head_activation == Activation::Tanh ? tanh_of(pre) : pre;
  Eigen::RowVectorXd y = p.w2 * act;
  y.array() += p.b2;
  if (cache) {
    cache->head_pre = std::move(pre);
    cache->head_act = std::move(act);
    cache->prediction = y;
  }
  return y;
}

Prediction forward(const LstmModel& model, const Eigen::MatrixXd& window) {
  const auto& s = model.shape();
  if (window.rows() != s.seq_len || window.cols() != s.input_dim)
    throw ShapeMismatch("window is " + std::to_string(window.rows()) + "x" + std::to_string(window.cols()) +
                        ", model expects " + std::to_string(s.seq_len) + "x" + std::to_string(s.input_dim));
  const double zero = 0.0;
  const Eigen::MatrixXd* ptr = &window;
  const auto batch = make_batch(std::span<const Eigen::MatrixXd* const>(&ptr, 1), std::span<const double>(&zero, 1));
  Prediction out;
  out.value = forward_batch(model, batch, &out.cache)(0);
  return out;
}

double mse_loss(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw ShapeMismatch("prediction and target counts differ");
  if (predictions.empty()) throw EmptyBatch();
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    sum += e * e;
  }
  return sum / static_cast<double>(predictions.size());
}

LossGradient backward(const LstmModel& model, const Batch& batch) {
  const auto& s = model.shape();
  ForwardCache fc;
  const Eigen::RowVectorXd y = forward_batch(model, batch, &fc);
  const auto p = model.views();
  const int H = s.hidden;
  const Eigen::Index B = batch.size();

  LossGradient out;
  out.loss = mse_loss(std::span<const double>(y.data(), static_cast<std::size_t>(B)),
                      std::span<const double>(batch.targets.data(), static_cast<std::size_t>(B)));
  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.param_count()));
  TensorViews<double> g(s, out.grad.data());

  const Eigen::RowVectorXd dy = (2.0 / static_cast<double>(B)) * (y - batch.targets.transpose());

  // head
  g.w2.noalias() = dy * fc.head_act.transpose();
  g.b2 = dy.sum();
  Eigen::MatrixXd d_pre = p.w2.transpose() * dy;
  if (s.head_activation == Activation::Tanh)
    d_pre.array() *= (1.0 - fc.head_act.array().square());
  const Eigen::MatrixXd& h_last = fc.hidden.back();
  g.w1.noalias() = d_pre * h_last.transpose();
  g.b1 = d_pre.rowwise().sum();
  Eigen::MatrixXd dh = p.w1.transpose() * d_pre;

  // recurrence, newest step first
  Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(H, B);
  Eigen::MatrixXd dz(4 * H, B);
  for (int t = s.seq_len - 1; t >= 0; --t) {
    const auto& i = fc.in_gate[t];
    const auto& f = fc.forget_gate[t];
    const auto& gg = fc.cell_gate[t];
    const auto& o = fc.out_gate[t];
    const auto& tc = fc.cell_tanh[t + 1];
    const auto& c_prev = fc.cell[t];
    const auto& h_prev = fc.hidden[t];

    dc.array() += dh.array() * o.array() * (1.0 - tc.array().square());
    dz.middleRows(0, H) = (dc.array() * gg.array() * i.array() * (1.0 - i.array())).matrix();
    dz.middleRows(H, H) = (dc.array() * c_prev.array() * f.array() * (1.0 - f.array())).matrix();
    dz.middleRows(2 * H, H) = (dc.array() * i.array() * (1.0 - gg.array().square())).matrix();
    dz.middleRows(3 * H, H) = (dh.array() * tc.array() * o.array() * (1.0 - o.array())).matrix();

    g.wx.noalias() += dz * batch.steps[t].transpose();
    g.wh.noalias() += dz * h_prev.transpose();
    g.b += dz.rowwise().sum();
    dh.noalias() = p.wh.transpose() * dz;
    dc.array() *= f.array();
  }
  return out;
}

GradCheckResult grad_check(const LstmModel& model, const Batch& batch, double fd_step) {
  if (!(fd_step > 0.0)) throw InvalidArgument("grad_check: fd_step must be positive");
  const auto analytic = backward(model, batch);
  LstmModel probe = model;
  auto loss_at = [&](const LstmModel& m) {
    const Eigen::RowVectorXd y = forward_batch(m, batch);
    return mse_loss(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                    std::span<const double>(batch.targets.data(), static_cast<std::size_t>(batch.size())));
  };
  GradCheckResult r;
  for (Eigen::Index k = 0; k < probe.params().size(); ++k) {
    const double saved = probe.params()(k);
    probe.params()(k) = saved + fd_step;
    const double up = loss_at(probe);
    probe.params()(k) = saved - fd_step;
    const double down = loss_at(probe);
    probe.params()(k) = saved;
    const double numeric = (up - down) / (2.0 * fd_step);
    const double a = analytic.grad(k);
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
    if (rel > r.max_rel_error || k == 0) {
      r.max_rel_error = rel;
      r.worst_index = static_cast<std::size_t>(k);
      r.analytic = a;
      r.numeric = numeric;
    }
  }
  return r;
}

}  // namespace piml
