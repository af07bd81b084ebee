#pragma once

#include <cstddef>
#include <functional>

#include "dgpo/params.hpp"
#include "dgpo/tape.hpp"

namespace dgpo::nn {

/// Scalar loss built on a tape from the flat parameter column.
using LossFn = std::function<Var(Tape&, Var theta)>;

struct ValueAndGrad {
  double value = 0.0;
  GradVector grad;
};

/// Evaluates `loss_fn` and its exact reverse-mode gradient. Throws
/// NumericError naming the first primitive that produced a non-finite value.
ValueAndGrad value_and_grad(const LossFn& loss_fn, const ModelParams& params);

/// Loss value only.
double evaluate_loss(const LossFn& loss_fn, const ModelParams& params);

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Compares `grad` against central differences with step `step`.
///
/// Per-entry error is |g - fd| / max(|g|, |fd|, 1e-4 * max|fd|, 1e-10), so
/// entries that are tiny relative to the whole gradient are judged on the
/// gradient's scale instead of their own.
FiniteDiffReport finite_diff_check(const LossFn& loss_fn, const ModelParams& params,
                                   const GradVector& grad, double step, double tol);

/// Same check against the gradient from value_and_grad.
FiniteDiffReport finite_diff_check(const LossFn& loss_fn, const ModelParams& params,
                                   double step, double tol);

}  // namespace dgpo::nn
