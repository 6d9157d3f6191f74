#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "piml/lstm.hpp"

namespace piml {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Rescale the gradient to this L2 norm when it is exceeded. Off by default.
  std::optional<double> clip_norm;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;
  AdamConfig config;

  static AdamState zeros(std::size_t n, const AdamConfig& config = {});
};

// One bias-corrected Adam update of `model` in place.
void adam_step(LstmModel& model, const Eigen::VectorXd& grad, AdamState& state);

}  // namespace piml
