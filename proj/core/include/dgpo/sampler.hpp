#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dgpo/params.hpp"
#include "dgpo/tape.hpp"

namespace dgpo::diffusion {

using nn::Condition;
using nn::Matrix;

struct SamplerConfig {
  int steps = 10;
  /// a in g_t = a·t; zero means the deterministic ODE.
  double noise_scale = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Batched x-prediction: rows of x_t with per-row t and condition.
using Denoiser = std::function<Matrix(const Matrix& x_t, std::span<const double> t,
                                      std::span<const Condition> cond)>;

/// Wraps a network. The params object must outlive the returned callable.
Denoiser model_denoiser(const nn::ModelParams& params);

/// One Euler(-Maruyama) transition of one sample.
struct TransitionRecord {
  double t = 0.0;
  double dt = 0.0;
  std::vector<double> x;       // state entering the step
  std::vector<double> mean;    // transition mean
  double variance = 0.0;       // per-coordinate variance g_t² Δ
  std::vector<double> x_next;  // realised next state
};

struct RolloutTrajectory {
  std::vector<TransitionRecord> steps;
};

struct SampleBatch {
  Matrix samples;
  /// One per row; empty unless trajectories were requested.
  std::vector<RolloutTrajectory> trajectories;
};

/// Descending uniform grid 1, 1 - Δ, ..., Δ with Δ = 1 / steps.
std::vector<double> time_grid(int steps);

/// Starting noise: row i is drawn from Rng(seeds[i]).
Matrix initial_noise(std::span<const std::uint64_t> seeds, std::size_t dim);

/// Coefficients (c_x, c_hat) of the transition mean μ = c_x·x_t + c_hat·x̂ for
/// a step of size dt at time t with diffusion g = a·t.
struct MeanCoefficients {
  double c_x;
  double c_hat;
};
MeanCoefficients transition_coefficients(double t, double dt, double noise_scale);

/// Euler integration of the probability-flow ODE for every row.
SampleBatch sample_ode(const Denoiser& f, std::span<const Condition> cond,
                       std::span<const std::uint64_t> seeds, int steps, std::size_t dim,
                       bool keep_path = false);

/// Euler–Maruyama on the reverse SDE with g_t = a·t. Row i draws its initial
/// noise and every increment from Rng(seeds[i]). Always records trajectories.
SampleBatch sample_sde(const Denoiser& f, std::span<const Condition> cond,
                       std::span<const std::uint64_t> seeds, int steps, double noise_scale,
                       std::size_t dim);

/// Single-sample forms; the sample's stream is Rng(config.seed).
std::vector<double> ode_sample(const nn::ModelParams& params, Condition cond,
                               const SamplerConfig& config);

struct SdeSample {
  std::vector<double> x;
  RolloutTrajectory trajectory;
};
SdeSample sde_sample(const nn::ModelParams& params, Condition cond, const SamplerConfig& config);

}  // namespace dgpo::diffusion
