#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dgpo::nn {

enum class Activation { silu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Condition label fed to the denoiser: a class index or the null token used
/// for condition dropout.
class Condition {
 public:
  constexpr Condition() = default;
  constexpr explicit Condition(int index) : index_(index) {}
  static constexpr Condition null() { return Condition(); }

  constexpr bool is_null() const { return index_ < 0; }
  constexpr int index() const { return index_; }
  friend constexpr bool operator==(Condition, Condition) = default;

 private:
  int index_ = -1;
};

/// Shape of the MLP f(x_t, t, c).
///
/// Input row = [x_t | sinusoidal(t) | embedding(c)]. The embedding table has
/// `cond_rows` rows; the last one is reserved for the null condition. Either
/// side input can be disabled by setting its width to zero (the learned
/// reward net uses neither time nor condition).
struct MlpArch {
  std::size_t data_dim = 2;
  std::size_t output_dim = 2;
  std::vector<std::size_t> hidden{64, 64, 64};
  Activation activation = Activation::silu;
  std::size_t time_dim = 16;
  std::size_t cond_rows = 9;
  std::size_t cond_dim = 16;

  std::size_t input_width() const;
  std::size_t param_count() const;
  bool uses_condition() const { return cond_rows > 0 && cond_dim > 0; }
  /// Number of real (non-null) condition classes.
  std::size_t num_classes() const { return cond_rows > 0 ? cond_rows - 1 : 0; }
  /// Table row for `c`; throws InputError when out of range.
  std::size_t condition_row(Condition c) const;

  friend bool operator==(const MlpArch&, const MlpArch&) = default;
};

/// Offsets of one dense layer inside the flat parameter vector.
struct LayerSlot {
  std::size_t weight_offset;
  std::size_t bias_offset;
  std::size_t in;
  std::size_t out;
};

struct ParamLayout {
  std::size_t cond_offset = 0;
  std::vector<LayerSlot> layers;
  std::size_t total = 0;
};

ParamLayout layout_of(const MlpArch& arch);

/// Flat parameter vector for one network (θ, θ_ref, θ⁻, θ_old all use this).
struct ModelParams {
  MlpArch arch;
  std::vector<double> values;

  /// Zero-filled parameters of the right size.
  static ModelParams zeros(const MlpArch& arch);
  /// Throws InputError if the length or finiteness invariant is broken.
  void validate() const;
  std::size_t size() const { return values.size(); }
};

/// Gradient aligned index-for-index with ModelParams::values.
struct GradVector {
  std::vector<double> values;
  std::size_t size() const { return values.size(); }
};

/// Weights ~ N(0, 1/fan_in), biases zero, embeddings ~ N(0, 1). With
/// `zero_output` the last layer starts at zero so the net outputs 0.
ModelParams init_params(const MlpArch& arch, std::uint64_t seed, bool zero_output = true);

}  // namespace dgpo::nn
