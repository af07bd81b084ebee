#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dgpo/errors.hpp"
#include "dgpo/losses.hpp"
#include "dgpo/metrics.hpp"
#include "dgpo/optim.hpp"
#include "dgpo/rewards.hpp"
#include "dgpo/schedule.hpp"

namespace dgpo::train {

enum class Algorithm { dgpo, dgpo_offline, dpo, dpo_offline, grpo };
enum class SamplerKind { ode, sde };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);
std::string to_string(SamplerKind s);
SamplerKind sampler_from_string(const std::string& s);
bool is_offline(Algorithm a);

/// Every tunable knob of pretraining, post-training and evaluation.
struct TrainConfig {
  // model
  std::vector<std::size_t> hidden{64, 64, 64};
  std::size_t time_dim = 16;
  std::size_t cond_dim = 16;

  // task and reward
  rewards::MixtureTask task;
  rewards::RewardKind reward = rewards::RewardKind::mode_target;
  double reward_tau = 0.1;

  // pretraining
  int pretrain_steps = 20000;
  int pretrain_batch = 128;
  double pretrain_lr = 1e-3;
  int pretrain_eval_every = 2000;

  // post-training
  Algorithm algorithm = Algorithm::dgpo;
  std::size_t group_size = 8;
  double beta = 100.0;
  double t_min = 0.3;
  double lr = 1e-4;
  int iterations = 500;
  double ema_decay = 0.3;
  int ema_start = 200;
  int rollout_steps = 10;
  SamplerKind sampler = SamplerKind::ode;
  double noise_scale = 0.7;
  double cond_drop = 0.05;
  int groups_per_iter = 4;
  double eps_std = 1e-8;
  double clip = 0.2;
  int grpo_inner_steps = 2;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  diffusion::Weighting weighting = diffusion::Weighting::constant;

  // evaluation
  int eval_every = 25;
  int eval_samples = 512;
  int holdout_samples = 2048;
  int projections = 64;

  std::uint64_t seed = 0;

  nn::MlpArch arch() const;
  bool conditional() const { return reward == rewards::RewardKind::mode_target; }
  EvalSettings eval_settings() const;
  /// Throws ConfigError on a violated invariant or an invalid combination.
  void validate() const;
};

rewards::RewardFn make_reward(const TrainConfig& config);

/// Held-out pretraining data for sliced-W2, fixed per seed.
Matrix holdout_set(const TrainConfig& config);

/// Called after every evaluation with the record and the evaluated parameters.
using EvalObserver = std::function<void(const MetricsRecord&, const nn::ModelParams&)>;

/// Non-finite loss during training. Carries the parameters from the last
/// evaluation that succeeded.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, nn::ModelParams last_good)
      : NumericError(what), last_good_(std::move(last_good)) {}
  const nn::ModelParams& last_good() const { return last_good_; }

 private:
  nn::ModelParams last_good_;
};

struct PretrainResult {
  nn::ModelParams params;
  std::vector<MetricsRecord> metrics;  // iteration = optimizer step
  double initial_sliced_w2 = 0.0;
  double final_sliced_w2 = 0.0;
};

/// Denoising pretraining on the conditioned mixture with condition dropout.
PretrainResult pretrain(const TrainConfig& config, const EvalObserver& observer = {});

/// Denoising loss of one pretraining batch with per-row (t, ε) draws.
nn::Var pretrain_loss_var(nn::Tape& tape, const nn::MlpArch& arch, nn::Var theta, const Matrix& x0,
                          std::span<const Condition> cond, std::span<const double> t,
                          const Matrix& eps, const diffusion::Schedule& schedule);

struct TrainResult {
  nn::ModelParams params;
  std::vector<MetricsRecord> metrics;
  std::vector<double> sampled_t;       // every training timestep drawn
  std::vector<double> ema_shadow;      // θ⁻[0] after each iteration
  std::vector<double> theta_shadow;    // θ[0] after each iteration
  int skipped_iterations = 0;
  int degenerate_groups = 0;
  int total_groups = 0;
  int null_condition_groups = 0;
};

/// Online group preference optimisation (rollouts from the EMA model θ⁻).
TrainResult dgpo_train(const TrainConfig& config, const nn::ModelParams& theta_init,
                       const rewards::RewardFn& reward, const EvalObserver& observer = {});

/// DGPO or DPO with every rollout drawn from the frozen reference model.
TrainResult offline_variant(const TrainConfig& config, const nn::ModelParams& theta_init,
                            const rewards::RewardFn& reward, const EvalObserver& observer = {});

/// Best-vs-worst pairwise baseline (online or offline per the algorithm tag).
TrainResult dpo_train(const TrainConfig& config, const nn::ModelParams& theta_init,
                      const rewards::RewardFn& reward, const EvalObserver& observer = {});

/// Clipped policy-gradient baseline on SDE rollouts.
TrainResult grpo_train(const TrainConfig& config, const nn::ModelParams& theta_init,
                       const rewards::RewardFn& reward, const EvalObserver& observer = {});

/// Dispatches on config.algorithm.
TrainResult post_train(const TrainConfig& config, const nn::ModelParams& theta_init,
                       const rewards::RewardFn& reward, const EvalObserver& observer = {});

/// One rollout group of size G from `params`; sample i uses sub-seed
/// derive_seed(seed, i).
pref::Group generate_group(const nn::ModelParams& params, Condition net_cond, Condition target,
                           const rewards::RewardFn& reward, std::size_t group_size,
                           SamplerKind sampler, int steps, double noise_scale, std::uint64_t seed,
                           double eps_std, std::vector<diffusion::RolloutTrajectory>* trajectories = nullptr);

}  // namespace dgpo::train
