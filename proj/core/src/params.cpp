#include "dgpo/params.hpp"

#include <cmath>

#include "dgpo/errors.hpp"
#include "dgpo/rng.hpp"

namespace dgpo::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::silu:
      return "silu";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "silu") return Activation::silu;
  throw InputError("unknown activation '" + s + "'");
}

std::size_t MlpArch::input_width() const {
  return data_dim + time_dim + (uses_condition() ? cond_dim : 0);
}

std::size_t MlpArch::condition_row(Condition c) const {
  if (!uses_condition()) {
    if (!c.is_null()) throw InputError("architecture has no condition input");
    return 0;
  }
  if (c.is_null()) return cond_rows - 1;
  if (c.index() >= static_cast<int>(num_classes())) {
    throw InputError("condition " + std::to_string(c.index()) + " outside table of " +
                     std::to_string(num_classes()) + " classes");
  }
  return static_cast<std::size_t>(c.index());
}

ParamLayout layout_of(const MlpArch& arch) {
  ParamLayout lay;
  std::size_t off = 0;
  lay.cond_offset = off;
  if (arch.uses_condition()) off += arch.cond_rows * arch.cond_dim;
  std::size_t in = arch.input_width();
  auto add_layer = [&](std::size_t out) {
    LayerSlot s{off, off + in * out, in, out};
    off += in * out + out;
    lay.layers.push_back(s);
    in = out;
  };
  for (std::size_t h : arch.hidden) add_layer(h);
  add_layer(arch.output_dim);
  lay.total = off;
  return lay;
}

std::size_t MlpArch::param_count() const { return layout_of(*this).total; }

ModelParams ModelParams::zeros(const MlpArch& arch) {
  return ModelParams{arch, std::vector<double>(arch.param_count(), 0.0)};
}

void ModelParams::validate() const {
  const std::size_t want = arch.param_count();
  if (values.size() != want) {
    throw InputError("parameter vector has " + std::to_string(values.size()) +
                     " entries, architecture implies " + std::to_string(want));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw InputError("parameter " + std::to_string(i) + " is not finite");
    }
  }
}

ModelParams init_params(const MlpArch& arch, std::uint64_t seed, bool zero_output) {
  ModelParams p = ModelParams::zeros(arch);
  const ParamLayout lay = layout_of(arch);
  Rng rng(seed);
  if (arch.uses_condition()) {
    for (std::size_t i = 0; i < arch.cond_rows * arch.cond_dim; ++i) {
      p.values[lay.cond_offset + i] = rng.normal();
    }
  }
  for (std::size_t l = 0; l < lay.layers.size(); ++l) {
    const LayerSlot& s = lay.layers[l];
    if (zero_output && l + 1 == lay.layers.size()) break;
    const double sd = 1.0 / std::sqrt(static_cast<double>(s.in));
    for (std::size_t i = 0; i < s.in * s.out; ++i) p.values[s.weight_offset + i] = sd * rng.normal();
  }
  return p;
}

}  // namespace dgpo::nn
