#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgpo/params.hpp"

namespace dgpo::nn {

enum class OptimizerKind { adam, sgd };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  static OptimizerState adam(double lr, std::size_t n);
  static OptimizerState sgd(double lr, std::size_t n);
};

/// One update in place. SGD mode is exactly p -= lr * g; moments are still decayed.
void adam_step(OptimizerState& state, ModelParams& params, const GradVector& grads);

/// mu * theta_minus + (1 - mu) * theta, elementwise. mu = 0 copies theta.
ModelParams ema_update(const ModelParams& theta_minus, const ModelParams& theta, double mu);

}  // namespace dgpo::nn
