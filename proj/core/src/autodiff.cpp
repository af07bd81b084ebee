#include "dgpo/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dgpo/errors.hpp"
#include "dgpo/mlp.hpp"

namespace dgpo::nn {

ValueAndGrad value_and_grad(const LossFn& loss_fn, const ModelParams& params) {
  Tape tape;
  Var theta = tape.leaf(as_column(params.values));
  Var loss = loss_fn(tape, theta);
  const double value = tape.scalar(loss);
  if (!std::isfinite(value)) {
    throw NumericError("non-finite loss; first offending primitive: " + tape.first_nonfinite());
  }
  tape.backward(loss);
  const Matrix g = tape.grad(theta);
  ValueAndGrad out;
  out.value = value;
  out.grad.values.assign(g.data(), g.data() + g.size());
  for (std::size_t i = 0; i < out.grad.values.size(); ++i) {
    if (!std::isfinite(out.grad.values[i])) {
      throw NumericError("non-finite gradient at parameter " + std::to_string(i));
    }
  }
  return out;
}

double evaluate_loss(const LossFn& loss_fn, const ModelParams& params) {
  Tape tape;
  Var theta = tape.constant(as_column(params.values));
  Var loss = loss_fn(tape, theta);
  const double value = tape.scalar(loss);
  if (!std::isfinite(value)) {
    throw NumericError("non-finite loss; first offending primitive: " + tape.first_nonfinite());
  }
  return value;
}

FiniteDiffReport finite_diff_check(const LossFn& loss_fn, const ModelParams& params,
                                   const GradVector& grad, double step, double tol) {
  if (!(step > 0.0)) throw InputError("finite_diff_check: step must be positive");
  if (grad.size() != params.size()) throw InputError("finite_diff_check: gradient length mismatch");
  std::vector<double> fd(params.size());
  ModelParams probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = probe.values[i];
    probe.values[i] = orig + step;
    const double up = evaluate_loss(loss_fn, probe);
    probe.values[i] = orig - step;
    const double down = evaluate_loss(loss_fn, probe);
    probe.values[i] = orig;
    fd[i] = (up - down) / (2.0 * step);
  }
  double scale = 0.0;
  for (double v : fd) scale = std::max(scale, std::abs(v));
  FiniteDiffReport rep;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double a = grad.values[i];
    const double denom = std::max({std::abs(a), std::abs(fd[i]), 1e-4 * scale, 1e-10});
    const double err = std::abs(a - fd[i]) / denom;
    if (err > rep.max_rel_error) {
      rep.max_rel_error = err;
      rep.worst_index = i;
    }
  }
  rep.passed = rep.max_rel_error <= tol;
  return rep;
}

FiniteDiffReport finite_diff_check(const LossFn& loss_fn, const ModelParams& params,
                                   double step, double tol) {
  return finite_diff_check(loss_fn, params, value_and_grad(loss_fn, params).grad, step, tol);
}

}  // namespace dgpo::nn
