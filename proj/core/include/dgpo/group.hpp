#pragma once

#include <span>
#include <vector>

#include "dgpo/params.hpp"
#include "dgpo/tape.hpp"

namespace dgpo::pref {

using nn::Condition;
using nn::Matrix;

/// Population-std normalisation (r_i - mean) / max(std, eps_std). All-equal
/// rewards give the zero vector. Rejects groups smaller than two.
std::vector<double> advantages(std::span<const double> rewards, double eps_std = 1e-8);

/// One rollout group with its preference partition.
///
/// `cond` is the label fed to the network (null when dropped); `target` is
/// the label the rewards were scored against.
struct Group {
  Condition cond;
  Condition target;
  Matrix samples;  // G x d, detached rollout data
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<bool> positive;  // A_i > 0
  std::vector<double> weights; // |A_i|
  bool degenerate = false;     // no positive member

  std::size_t size() const { return rewards.size(); }
  double positive_weight_sum() const;
  double negative_weight_sum() const;
  /// +w_i for G⁺ members, -w_i for G⁻ members.
  std::vector<double> signed_weights() const;
};

/// Sets labels, weights and the degenerate flag from `group.advantages`.
void partition_and_weight(Group& group);

/// Builds a fully scored group: advantages, partition and weights.
Group make_group(Condition cond, Condition target, Matrix samples, std::vector<double> rewards,
                 double eps_std = 1e-8);

}  // namespace dgpo::pref
