#include "piml/adam.hpp"

#include <cmath>

#include "piml/error.hpp"

namespace piml {

AdamState AdamState::zeros(std::size_t n, const AdamConfig& config) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  s.v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  s.config = config;
  return s;
}

void adam_step(LstmModel& model, const Eigen::VectorXd& grad, AdamState& state) {
  const auto n = static_cast<Eigen::Index>(model.param_count());
  if (grad.size() != n || state.m.size() != n || state.v.size() != n)
    throw ShapeMismatch("adam_step: gradient/state size does not match the model");
  if (state.t < 0) throw InvalidArgument("adam_step: negative step counter");
  const auto& c = state.config;

  Eigen::VectorXd g = grad;
  if (c.clip_norm) {
    const double norm = g.norm();
    if (norm > *c.clip_norm) g *= *c.clip_norm / norm;
  }
  state.t += 1;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * g;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * g.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  auto& p = model.params();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double m_hat = state.m(k) / bc1;
    const double v_hat = state.v(k) / bc2;
    p(k) -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace piml
