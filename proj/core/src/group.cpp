#include "dgpo/group.hpp"

#include <cmath>

#include "dgpo/errors.hpp"

namespace dgpo::pref {

std::vector<double> advantages(std::span<const double> rewards, double eps_std) {
  const std::size_t g = rewards.size();
  if (g < 2) throw InputError("advantages: group size must be at least 2");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  bool all_equal = true;
  double var = 0.0;
  for (double r : rewards) {
    all_equal = all_equal && r == rewards[0];
    var += (r - mean) * (r - mean);
  }
  std::vector<double> a(g, 0.0);
  if (all_equal) return a;
  const double sd = std::max(std::sqrt(var / static_cast<double>(g)), eps_std);
  for (std::size_t i = 0; i < g; ++i) a[i] = (rewards[i] - mean) / sd;
  return a;
}

double Group::positive_weight_sum() const {
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (positive[i]) s += weights[i];
  }
  return s;
}

double Group::negative_weight_sum() const {
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!positive[i]) s += weights[i];
  }
  return s;
}

std::vector<double> Group::signed_weights() const {
  std::vector<double> s(weights.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = positive[i] ? weights[i] : -weights[i];
  return s;
}

void partition_and_weight(Group& group) {
  const std::size_t g = group.advantages.size();
  group.positive.assign(g, false);
  group.weights.assign(g, 0.0);
  bool any_positive = false;
  for (std::size_t i = 0; i < g; ++i) {
    group.positive[i] = group.advantages[i] > 0.0;
    group.weights[i] = std::abs(group.advantages[i]);
    any_positive = any_positive || group.positive[i];
  }
  group.degenerate = !any_positive;
}

Group make_group(Condition cond, Condition target, Matrix samples, std::vector<double> rewards,
                 double eps_std) {
  if (static_cast<std::size_t>(samples.rows()) != rewards.size()) {
    throw InputError("make_group: one reward per sample required");
  }
  Group g;
  g.cond = cond;
  g.target = target;
  g.samples = std::move(samples);
  g.advantages = advantages(rewards, eps_std);
  g.rewards = std::move(rewards);
  partition_and_weight(g);
  return g;
}

}  // namespace dgpo::pref
