#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dgpo/params.hpp"
#include "dgpo/rewards.hpp"
#include "dgpo/tape.hpp"

namespace dgpo::train {

using nn::Condition;
using nn::Matrix;

/// Sliced 2-Wasserstein distance: sqrt of the mean, over `n_projections`
/// seeded unit directions, of the exact 1-D W2² between the projected
/// empirical distributions. Set sizes may differ.
double sliced_w2(const Matrix& a, const Matrix& b, int n_projections, std::uint64_t seed);

/// Exact W2² between two 1-D empirical distributions (sorted in place).
double w2_squared_1d(std::vector<double> a, std::vector<double> b);

/// Labels i mod K for a conditional task; all-null when `conditional` is off.
std::vector<Condition> cycle_conditions(std::size_t n, std::size_t classes, bool conditional);

/// Draws one point per label from the mixture; a null label picks a random mode.
Matrix sample_mixture(const rewards::MixtureTask& task, std::span<const Condition> labels,
                      std::uint64_t seed);

struct MetricsRecord {
  int iteration = 0;
  double mean_reward = 0.0;
  double sliced_w2 = 0.0;
  double train_loss = 0.0;
  int degenerate_groups = 0;
  double wall_seconds = 0.0;
};

struct EvalSettings {
  int n_samples = 512;
  int rollout_steps = 10;
  int projections = 64;
  std::uint64_t projection_seed = 0x5eed;
  bool conditional = true;
};

struct Evaluation {
  MetricsRecord record;
  Matrix samples;
  std::vector<Condition> labels;
};

/// Mean reward over `n_samples` 10-step ODE samples (labels cycle through the
/// classes) and sliced-W2 of those samples against `holdout`.
Evaluation evaluate(const nn::ModelParams& params, const rewards::RewardFn& reward,
                    const Matrix& holdout, std::uint64_t seed, const EvalSettings& settings);

}  // namespace dgpo::train
