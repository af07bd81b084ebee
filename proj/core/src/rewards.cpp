#include "dgpo/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "dgpo/errors.hpp"
#include "dgpo/mlp.hpp"
#include "dgpo/optim.hpp"

namespace dgpo::rewards {

std::array<double, 2> MixtureTask::center(std::size_t k) const {
  const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(modes);
  return {radius * std::cos(a), radius * std::sin(a)};
}

std::vector<std::array<double, 2>> MixtureTask::centers() const {
  std::vector<std::array<double, 2>> out;
  for (std::size_t k = 0; k < modes; ++k) out.push_back(center(k));
  return out;
}

double mode_reward(const MixtureTask& task, Condition cond, std::span<const double> x, double tau) {
  if (cond.is_null() || cond.index() >= static_cast<int>(task.modes)) {
    throw InputError("mode_reward: unknown condition " + std::to_string(cond.index()));
  }
  if (x.size() != 2) throw InputError("mode_reward: expects a 2-D sample");
  const auto mu = task.center(static_cast<std::size_t>(cond.index()));
  const double d2 = (x[0] - mu[0]) * (x[0] - mu[0]) + (x[1] - mu[1]) * (x[1] - mu[1]);
  return std::exp(-d2 / (2.0 * tau * tau));
}

double ring_reward(std::span<const double> x) {
  double n2 = 0.0;
  for (double v : x) n2 += v * v;
  const double dev = std::sqrt(n2) - 1.0;
  return std::exp(-dev * dev / (2.0 * 0.05 * 0.05));
}

namespace {

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = 1;
    char32_t cp = c;
    if (c >= 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else if (c >= 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if (c >= 0xC0) {
      len = 2;
      cp = c & 0x1F;
    }
    if (i + len > s.size()) len = 1;
    for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(len == 1 ? c : cp);
    i += len;
  }
  return out;
}

}  // namespace

std::size_t edit_distance(std::string_view a_utf8, std::string_view b_utf8) {
  const std::u32string a = decode_utf8(a_utf8);
  const std::u32string b = decode_utf8(b_utf8);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double text_fidelity(std::string_view rendered, std::string_view target) {
  const std::size_t n_ref = decode_utf8(target).size();
  if (n_ref == 0) throw InputError("text_fidelity: target must be non-empty");
  const double ne = static_cast<double>(edit_distance(rendered, target));
  return std::max(1.0 - ne / static_cast<double>(n_ref), 0.0);
}

std::string to_string(RewardKind k) {
  switch (k) {
    case RewardKind::mode_target:
      return "mode";
    case RewardKind::ring:
      return "ring";
    case RewardKind::text_fidelity:
      return "text_fidelity";
    case RewardKind::learned_bt:
      return "learned_bt";
  }
  return "?";
}

RewardKind reward_kind_from_string(const std::string& s) {
  if (s == "mode") return RewardKind::mode_target;
  if (s == "ring") return RewardKind::ring;
  if (s == "text_fidelity") return RewardKind::text_fidelity;
  if (s == "learned_bt") return RewardKind::learned_bt;
  throw InputError("unknown reward '" + s + "'");
}

RewardFn RewardFn::mode_target(MixtureTask task, double tau) {
  if (!(tau > 0.0)) throw InputError("mode reward bandwidth must be positive");
  RewardFn r;
  r.kind_ = RewardKind::mode_target;
  r.task_ = task;
  r.tau_ = tau;
  return r;
}

RewardFn RewardFn::ring() { return RewardFn{}; }

RewardFn RewardFn::learned(nn::ModelParams params) {
  params.validate();
  if (params.arch.output_dim != 1) throw InputError("learned reward net must have scalar output");
  RewardFn r;
  r.kind_ = RewardKind::learned_bt;
  r.learned_ = std::move(params);
  return r;
}

double RewardFn::operator()(Condition cond, std::span<const double> x) const {
  switch (kind_) {
    case RewardKind::mode_target:
      return mode_reward(task_, cond, x, tau_);
    case RewardKind::ring:
      return ring_reward(x);
    case RewardKind::learned_bt: {
      const Condition c = learned_.arch.uses_condition() ? cond : Condition::null();
      return nn::mlp_forward(learned_, x, 0.0, c)[0];
    }
    case RewardKind::text_fidelity:
      break;
  }
  throw InputError("text-fidelity reward scores strings, not samples");
}

nn::MlpArch bt_reward_arch(std::size_t num_classes) {
  nn::MlpArch a;
  a.data_dim = 2;
  a.output_dim = 1;
  a.hidden = {32, 32};
  a.time_dim = 0;
  a.cond_rows = num_classes > 0 ? num_classes + 1 : 0;
  a.cond_dim = num_classes > 0 ? 8 : 0;
  return a;
}

namespace {

struct PairBatch {
  nn::Matrix winners;
  nn::Matrix losers;
  std::vector<Condition> conds;
};

PairBatch stack_pairs(const nn::MlpArch& arch, std::span<const PreferencePair> pairs) {
  const auto n = static_cast<Eigen::Index>(pairs.size());
  const auto d = static_cast<Eigen::Index>(arch.data_dim);
  PairBatch b{nn::Matrix(n, d), nn::Matrix(n, d), {}};
  for (Eigen::Index i = 0; i < n; ++i) {
    const PreferencePair& p = pairs[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(p.winner.size()) != d || static_cast<Eigen::Index>(p.loser.size()) != d) {
      throw InputError("preference pair has wrong sample dimension");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      b.winners(i, j) = p.winner[j];
      b.losers(i, j) = p.loser[j];
    }
    if (arch.uses_condition()) b.conds.push_back(p.cond);
  }
  return b;
}

}  // namespace

nn::LossFn bt_loss_fn(const nn::MlpArch& arch, std::span<const PreferencePair> pairs) {
  if (pairs.empty()) throw InputError("BT loss needs at least one pair");
  auto batch = std::make_shared<PairBatch>(stack_pairs(arch, pairs));
  return [arch, batch](nn::Tape& tape, nn::Var theta) {
    nn::Var rw = nn::mlp_forward(tape, arch, theta, batch->winners, {}, batch->conds);
    nn::Var rl = nn::mlp_forward(tape, arch, theta, batch->losers, {}, batch->conds);
    // -log σ(r_w - r_l) = softplus(r_l - r_w)
    return tape.mean(tape.softplus(tape.sub(rl, rw)));
  };
}

std::vector<double> reward_net_scores(const nn::ModelParams& params,
                                      std::span<const std::vector<double>> xs,
                                      std::span<const Condition> conds) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Condition c = params.arch.uses_condition() && i < conds.size() ? conds[i] : Condition::null();
    out.push_back(nn::mlp_forward(params, xs[i], 0.0, c)[0]);
  }
  return out;
}

double bt_loss(const nn::ModelParams& params, std::span<const PreferencePair> pairs) {
  return nn::evaluate_loss(bt_loss_fn(params.arch, pairs), params);
}

BtTrainResult train_bt_reward(std::span<const PreferencePair> pairs, int epochs, double lr,
                              std::uint64_t seed, const nn::MlpArch& arch) {
  if (pairs.empty()) throw InputError("train_bt_reward: no preference pairs");
  if (arch.output_dim != 1) throw InputError("train_bt_reward: reward net must have scalar output");
  BtTrainResult res{nn::init_params(arch, seed, /*zero_output=*/true), {}};
  const nn::LossFn loss = bt_loss_fn(arch, pairs);
  nn::OptimizerState opt = nn::OptimizerState::adam(lr, res.params.size());
  for (int e = 0; e < epochs; ++e) {
    const nn::ValueAndGrad vg = nn::value_and_grad(loss, res.params);
    res.epoch_loss.push_back(vg.value);
    nn::adam_step(opt, res.params, vg.grad);
  }
  return res;
}

}  // namespace dgpo::rewards
