#include "dgpo/mlp.hpp"

#include <cmath>

#include "dgpo/errors.hpp"

namespace dgpo::nn {

Matrix time_embedding(std::span<const double> t, std::size_t dim) {
  Matrix out(static_cast<Eigen::Index>(t.size()), static_cast<Eigen::Index>(dim));
  const std::size_t half = dim / 2;
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (std::size_t j = 0; j < half; ++j) {
      // frequencies span 1000 down to 1000 / 10^4 over the embedding
      const double freq =
          1000.0 * std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
      out(r, j) = std::sin(freq * t[r]);
      out(r, half + j) = std::cos(freq * t[r]);
    }
    if (dim % 2 == 1) out(r, dim - 1) = t[r];
  }
  return out;
}

Matrix as_column(const std::vector<double>& values) {
  return Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(values.size()), 1);
}

Var mlp_forward(Tape& tape, const MlpArch& arch, Var theta, const Matrix& x,
                std::span<const double> t, std::span<const Condition> cond) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (static_cast<std::size_t>(x.cols()) != arch.data_dim) {
    throw InputError("mlp_forward: input has " + std::to_string(x.cols()) +
                     " columns, architecture expects " + std::to_string(arch.data_dim));
  }
  if (static_cast<std::size_t>(tape.value(theta).rows()) != arch.param_count()) {
    throw InputError("mlp_forward: parameter column does not match architecture");
  }
  const ParamLayout lay = layout_of(arch);

  Var h = tape.constant(x);
  if (arch.time_dim > 0) {
    if (t.size() != n) throw InputError("mlp_forward: need one t per row");
    for (double ti : t) {
      if (!std::isfinite(ti)) throw InputError("mlp_forward: t not finite");
    }
    h = tape.concat_cols({h, tape.constant(time_embedding(t, arch.time_dim))});
  }
  if (arch.uses_condition()) {
    if (cond.size() != n) throw InputError("mlp_forward: need one condition per row");
    std::vector<int> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<int>(arch.condition_row(cond[i]));
    Var table = tape.slice(theta, lay.cond_offset, arch.cond_rows, arch.cond_dim);
    h = tape.concat_cols({h, tape.gather_rows(table, rows)});
  }
  for (std::size_t l = 0; l < lay.layers.size(); ++l) {
    const LayerSlot& s = lay.layers[l];
    Var w = tape.slice(theta, s.weight_offset, s.in, s.out);
    Var b = tape.slice(theta, s.bias_offset, 1, s.out);
    h = tape.add_row(tape.matmul(h, w), b);
    if (l + 1 < lay.layers.size()) h = tape.silu(h);
  }
  return h;
}

Matrix mlp_forward(const ModelParams& params, const Matrix& x, std::span<const double> t,
                   std::span<const Condition> cond) {
  Tape tape;
  Var theta = tape.constant(as_column(params.values));
  return tape.value(mlp_forward(tape, params.arch, theta, x, t, cond));
}

std::vector<double> mlp_forward(const ModelParams& params, std::span<const double> x_t, double t,
                                Condition cond) {
  Matrix x = Eigen::Map<const Matrix>(x_t.data(), 1, static_cast<Eigen::Index>(x_t.size()));
  const double ts[1] = {t};
  const Condition cs[1] = {cond};
  const Matrix out = mlp_forward(params, x, params.arch.time_dim > 0 ? std::span<const double>(ts) : std::span<const double>{},
                                 params.arch.uses_condition() ? std::span<const Condition>(cs) : std::span<const Condition>{});
  return {out.data(), out.data() + out.size()};
}

}  // namespace dgpo::nn
