#include "dgpo/optim.hpp"

#include <cmath>

#include "dgpo/errors.hpp"

namespace dgpo::nn {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw InputError("unknown optimizer '" + s + "'");
}

OptimizerState OptimizerState::adam(double lr, std::size_t n) {
  OptimizerState s;
  s.kind = OptimizerKind::adam;
  s.lr = lr;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

OptimizerState OptimizerState::sgd(double lr, std::size_t n) {
  OptimizerState s = adam(lr, n);
  s.kind = OptimizerKind::sgd;
  return s;
}

void adam_step(OptimizerState& state, ModelParams& params, const GradVector& grads) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
    throw InputError("adam_step: parameter, gradient and moment lengths differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grads.values[i])) {
      throw NumericError("adam_step: gradient entry " + std::to_string(i) + " is not finite");
    }
  }
  ++state.step;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads.values[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    if (state.kind == OptimizerKind::sgd) {
      params.values[i] -= state.lr * g;
    } else {
      const double mhat = state.m[i] / c1;
      const double vhat = state.v[i] / c2;
      params.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

ModelParams ema_update(const ModelParams& theta_minus, const ModelParams& theta, double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw InputError("ema_update: decay must lie in [0, 1]");
  if (!(theta_minus.arch == theta.arch) || theta_minus.size() != theta.size()) {
    throw InputError("ema_update: architectures differ");
  }
  ModelParams out = theta_minus;
  if (mu == 0.0) {
    out.values = theta.values;
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values[i] = mu * theta_minus.values[i] + (1.0 - mu) * theta.values[i];
  }
  return out;
}

}  // namespace dgpo::nn
