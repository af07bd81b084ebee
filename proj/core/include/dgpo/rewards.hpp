#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgpo/autodiff.hpp"
#include "dgpo/params.hpp"

namespace dgpo::rewards {

using nn::Condition;

/// K Gaussian modes equally spaced on a circle; the toy generation task.
struct MixtureTask {
  std::size_t modes = 8;
  double radius = 1.0;
  double mode_std = 0.05;

  std::array<double, 2> center(std::size_t k) const;
  std::vector<std::array<double, 2>> centers() const;
};

/// exp(-||x - μ_k||² / (2τ²)). Null or out-of-range `cond` is rejected.
double mode_reward(const MixtureTask& task, Condition cond, std::span<const double> x, double tau = 0.1);

/// exp(-(||x|| - 1)² / (2·0.05²)).
double ring_reward(std::span<const double> x);

/// Levenshtein distance over Unicode code points (UTF-8 input).
std::size_t edit_distance(std::string_view a, std::string_view b);

/// max(1 - N_e / N_ref, 0) with N_ref the code-point length of `target`.
double text_fidelity(std::string_view rendered, std::string_view target);

struct PreferencePair {
  Condition cond;
  std::vector<double> winner;
  std::vector<double> loser;
};

enum class RewardKind { mode_target, ring, text_fidelity, learned_bt };

std::string to_string(RewardKind k);
RewardKind reward_kind_from_string(const std::string& s);

/// Reward over (condition, 2-D sample). Text fidelity is string-valued and
/// lives in text_fidelity(); a RewardFn of that kind cannot score samples.
class RewardFn {
 public:
  static RewardFn mode_target(MixtureTask task, double tau = 0.1);
  static RewardFn ring();
  static RewardFn learned(nn::ModelParams params);

  RewardKind kind() const { return kind_; }
  /// True when the reward depends on the condition label.
  bool conditional() const { return kind_ == RewardKind::mode_target; }
  const MixtureTask& task() const { return task_; }
  double tau() const { return tau_; }
  const nn::ModelParams& learned_params() const { return learned_; }

  double operator()(Condition cond, std::span<const double> x) const;

 private:
  RewardKind kind_ = RewardKind::ring;
  MixtureTask task_;
  double tau_ = 0.1;
  nn::ModelParams learned_;
};

/// Default architecture of the learned reward r_φ(c, x): scalar output, no
/// time input, condition table sized for `num_classes` (0 = unconditional).
nn::MlpArch bt_reward_arch(std::size_t num_classes);

/// Raw scalar output of a reward net for each sample row.
std::vector<double> reward_net_scores(const nn::ModelParams& params,
                                      std::span<const std::vector<double>> xs,
                                      std::span<const Condition> conds);

/// Mean Bradley–Terry negative log-likelihood, -log σ(r(c, x_w) - r(c, x_l)).
double bt_loss(const nn::ModelParams& params, std::span<const PreferencePair> pairs);

/// Same loss as a differentiable closure; `pairs` must outlive it.
nn::LossFn bt_loss_fn(const nn::MlpArch& arch, std::span<const PreferencePair> pairs);

struct BtTrainResult {
  nn::ModelParams params;
  std::vector<double> epoch_loss;
  RewardFn reward() const { return RewardFn::learned(params); }
};

/// Full-batch Adam on the BT likelihood, starting from a zero output layer
/// (initial loss exactly log 2).
BtTrainResult train_bt_reward(std::span<const PreferencePair> pairs, int epochs, double lr,
                              std::uint64_t seed, const nn::MlpArch& arch = bt_reward_arch(0));

}  // namespace dgpo::rewards
