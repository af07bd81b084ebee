#pragma once

#include <span>
#include <vector>

#include "dgpo/params.hpp"
#include "dgpo/tape.hpp"

namespace dgpo::nn {

/// Sinusoidal embedding of t in (0, 1]; half sine, half cosine.
Matrix time_embedding(std::span<const double> t, std::size_t dim);

/// Batched forward pass recorded on `tape`. `theta` is the flat parameter
/// column (leaf or constant). Rows of `x` are samples; `t` and `cond` are
/// per-row and may be empty when the architecture does not use them.
Var mlp_forward(Tape& tape, const MlpArch& arch, Var theta, const Matrix& x,
                std::span<const double> t, std::span<const Condition> cond);

/// Plain batched evaluation (no gradient).
Matrix mlp_forward(const ModelParams& params, const Matrix& x, std::span<const double> t,
                   std::span<const Condition> cond);

/// Single-sample convenience overload.
std::vector<double> mlp_forward(const ModelParams& params, std::span<const double> x_t,
                                double t, Condition cond);

/// Column vector view of the parameters for use as a tape input.
Matrix as_column(const std::vector<double>& values);

}  // namespace dgpo::nn
