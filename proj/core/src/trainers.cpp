#include "dgpo/trainers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>

#include "dgpo/mlp.hpp"
#include "dgpo/rng.hpp"

namespace dgpo::train {
namespace {

// Independent RNG streams derived from the run seed.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kPretrainStream = 2,
  kHoldoutStream = 3,
  kEvalStream = 4,
  kIterStream = 5,
  kRolloutStream = 6,
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::dgpo:
      return "dgpo";
    case Algorithm::dgpo_offline:
      return "dgpo-offline";
    case Algorithm::dpo:
      return "dpo";
    case Algorithm::dpo_offline:
      return "dpo-offline";
    case Algorithm::grpo:
      return "grpo";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
  for (Algorithm a : {Algorithm::dgpo, Algorithm::dgpo_offline, Algorithm::dpo, Algorithm::dpo_offline,
                      Algorithm::grpo}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown algorithm '" + s + "' (expected dgpo, dgpo-offline, dpo, dpo-offline or grpo)");
}

std::string to_string(SamplerKind s) { return s == SamplerKind::ode ? "ode" : "sde"; }

SamplerKind sampler_from_string(const std::string& s) {
  if (s == "ode") return SamplerKind::ode;
  if (s == "sde") return SamplerKind::sde;
  throw ConfigError("unknown sampler '" + s + "' (expected ode or sde)");
}

bool is_offline(Algorithm a) { return a == Algorithm::dgpo_offline || a == Algorithm::dpo_offline; }

nn::MlpArch TrainConfig::arch() const {
  nn::MlpArch a;
  a.data_dim = 2;
  a.output_dim = 2;
  a.hidden = hidden;
  a.time_dim = time_dim;
  a.cond_rows = task.modes + 1;
  a.cond_dim = cond_dim;
  return a;
}

EvalSettings TrainConfig::eval_settings() const {
  EvalSettings s;
  s.n_samples = eval_samples;
  s.rollout_steps = 10;
  s.projections = projections;
  s.conditional = conditional();
  return s;
}

void TrainConfig::validate() const {
  require(!hidden.empty(), "model.hidden must list at least one width");
  for (std::size_t h : hidden) require(h > 0, "model.hidden widths must be positive");
  require(task.modes >= 1, "task.modes must be >= 1");
  require(task.mode_std > 0.0, "task.mode_std must be positive");
  require(reward_tau > 0.0, "task.reward_tau must be positive");
  require(reward == rewards::RewardKind::mode_target || reward == rewards::RewardKind::ring,
          "task.reward must be mode or ring for post-training");
  require(pretrain_steps >= 0, "pretrain.steps must be >= 0");
  require(pretrain_batch >= 1, "pretrain.batch must be >= 1");
  require(pretrain_lr > 0.0, "pretrain.lr must be positive");
  require(pretrain_eval_every >= 1, "pretrain.eval_every must be >= 1");
  require(group_size >= 2, "posttrain.group_size must be >= 2");
  require(std::isfinite(beta) && beta >= 0.0, "posttrain.beta must be finite and >= 0");
  require(t_min >= 0.0 && t_min < 1.0, "posttrain.t_min must lie in [0, 1)");
  require(lr > 0.0, "posttrain.lr must be positive");
  require(iterations >= 0, "posttrain.iterations must be >= 0");
  require(ema_decay >= 0.0 && ema_decay <= 1.0, "posttrain.ema_decay must lie in [0, 1]");
  require(ema_start >= 0, "posttrain.ema_start must be >= 0");
  require(rollout_steps >= 1, "posttrain.rollout_steps must be >= 1");
  require(std::isfinite(noise_scale) && noise_scale >= 0.0, "posttrain.noise_scale must be >= 0");
  require(cond_drop >= 0.0 && cond_drop <= 1.0, "posttrain.cond_drop must lie in [0, 1]");
  require(groups_per_iter >= 1, "posttrain.groups_per_iter must be >= 1");
  require(eps_std > 0.0, "posttrain.eps_std must be positive");
  require(clip >= 0.0 && clip < 1.0, "posttrain.clip must lie in [0, 1)");
  require(grpo_inner_steps >= 1, "posttrain.grpo_inner_steps must be >= 1");
  require(eval_every >= 1, "eval.every must be >= 1");
  require(eval_samples >= 1, "eval.samples must be >= 1");
  require(holdout_samples >= 1, "eval.holdout must be >= 1");
  require(projections >= 1, "eval.projections must be >= 1");
  if (algorithm == Algorithm::grpo) {
    require(sampler == SamplerKind::sde && noise_scale > 0.0,
            "grpo needs a stochastic policy: set posttrain.sampler = sde with noise_scale > 0 "
            "(deterministic ODE rollouts do not provide a stochastic policy)");
  }
}

rewards::RewardFn make_reward(const TrainConfig& config) {
  if (config.reward == rewards::RewardKind::ring) return rewards::RewardFn::ring();
  return rewards::RewardFn::mode_target(config.task, config.reward_tau);
}

Matrix holdout_set(const TrainConfig& config) {
  const auto labels = cycle_conditions(static_cast<std::size_t>(config.holdout_samples), config.task.modes,
                                       config.conditional());
  return sample_mixture(config.task, labels, derive_seed(config.seed, kHoldoutStream));
}

nn::Var pretrain_loss_var(nn::Tape& tape, const nn::MlpArch& arch, nn::Var theta, const Matrix& x0,
                          std::span<const Condition> cond, std::span<const double> t,
                          const Matrix& eps, const diffusion::Schedule& schedule) {
  const Eigen::Index n = x0.rows();
  Matrix xt(n, x0.cols());
  Matrix w(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    xt.row(i) = (1.0 - t[i]) * x0.row(i) + t[i] * eps.row(i);
    w(i, 0) = schedule.lambda(t[i]) / static_cast<double>(n);
  }
  nn::Var xhat = nn::mlp_forward(tape, arch, theta, xt, t, cond);
  nn::Var sq = tape.row_sq_norm(tape.sub(xhat, tape.constant(x0)));
  return tape.sum(tape.mul(sq, tape.constant(std::move(w))));
}

namespace {

nn::OptimizerState make_optimizer(nn::OptimizerKind kind, double lr, std::size_t n) {
  return kind == nn::OptimizerKind::adam ? nn::OptimizerState::adam(lr, n) : nn::OptimizerState::sgd(lr, n);
}

/// Shared evaluation bookkeeping for every trainer.
class EvalLog {
 public:
  EvalLog(const TrainConfig& config, const rewards::RewardFn& reward, const EvalObserver& observer)
      : config_(config),
        reward_(reward),
        observer_(observer),
        holdout_(holdout_set(config)),
        seed_(derive_seed(config.seed, kEvalStream)) {}

  void add_loss(double loss) {
    loss_sum_ += loss;
    ++loss_count_;
  }

  void record(int iteration, const nn::ModelParams& params, int degenerate, std::vector<MetricsRecord>& out) {
    Evaluation ev = evaluate(params, reward_, holdout_, seed_, config_.eval_settings());
    ev.record.iteration = iteration;
    ev.record.train_loss = loss_count_ > 0 ? loss_sum_ / loss_count_ : 0.0;
    ev.record.degenerate_groups = degenerate;
    ev.record.wall_seconds = clock_.seconds();
    loss_sum_ = 0.0;
    loss_count_ = 0;
    out.push_back(ev.record);
    if (observer_) observer_(ev.record, params);
  }

 private:
  const TrainConfig& config_;
  const rewards::RewardFn& reward_;
  const EvalObserver& observer_;
  Matrix holdout_;
  std::uint64_t seed_;
  Stopwatch clock_;
  double loss_sum_ = 0.0;
  int loss_count_ = 0;
};

bool due(int step, int every, int total) { return (step + 1) % every == 0 || step + 1 == total; }

}  // namespace

PretrainResult pretrain(const TrainConfig& config, const EvalObserver& observer) {
  config.validate();
  const nn::MlpArch arch = config.arch();
  const diffusion::Schedule schedule{config.weighting};
  // pretraining always scores sample quality on the conditional mixture
  TrainConfig eval_cfg = config;
  eval_cfg.reward = rewards::RewardKind::mode_target;
  const rewards::RewardFn reward = make_reward(eval_cfg);
  EvalLog log(eval_cfg, reward, observer);

  PretrainResult res;
  res.params = nn::init_params(arch, derive_seed(config.seed, kInitStream));
  nn::OptimizerState opt = make_optimizer(config.optimizer, config.pretrain_lr, res.params.size());
  log.record(0, res.params, 0, res.metrics);
  nn::ModelParams last_good = res.params;

  const auto batch = static_cast<std::size_t>(config.pretrain_batch);
  Matrix eps(static_cast<Eigen::Index>(batch), 2);
  std::vector<Condition> labels(batch), net_cond(batch);
  std::vector<double> ts(batch);
  for (int step = 0; step < config.pretrain_steps; ++step) {
    Rng rng(derive_seed(config.seed, kPretrainStream, step));
    for (std::size_t i = 0; i < batch; ++i) {
      labels[i] = Condition(static_cast<int>(rng.index(config.task.modes)));
      net_cond[i] = rng.bernoulli(config.cond_drop) ? Condition::null() : labels[i];
    }
    const Matrix x0 = sample_mixture(config.task, labels, rng.engine()());
    for (std::size_t i = 0; i < batch; ++i) {
      ts[i] = rng.uniform(schedule.t_floor, 1.0);
      eps(static_cast<Eigen::Index>(i), 0) = rng.normal();
      eps(static_cast<Eigen::Index>(i), 1) = rng.normal();
    }
    nn::ValueAndGrad vg;
    try {
      vg = nn::value_and_grad(
          [&](nn::Tape& tape, nn::Var theta) {
            return pretrain_loss_var(tape, arch, theta, x0, net_cond, ts, eps, schedule);
          },
          res.params);
    } catch (const NumericError& e) {
      throw DivergenceError("pretraining diverged at step " + std::to_string(step) + ": " + e.what(), last_good);
    }
    nn::adam_step(opt, res.params, vg.grad);
    log.add_loss(vg.value);
    if (due(step, config.pretrain_eval_every, config.pretrain_steps)) {
      log.record(step + 1, res.params, 0, res.metrics);
      last_good = res.params;
    }
  }
  res.initial_sliced_w2 = res.metrics.front().sliced_w2;
  res.final_sliced_w2 = res.metrics.back().sliced_w2;
  return res;
}

pref::Group generate_group(const nn::ModelParams& params, Condition net_cond, Condition target,
                           const rewards::RewardFn& reward, std::size_t group_size, SamplerKind sampler,
                           int steps, double noise_scale, std::uint64_t seed, double eps_std,
                           std::vector<diffusion::RolloutTrajectory>* trajectories) {
  std::vector<std::uint64_t> seeds(group_size);
  for (std::size_t i = 0; i < group_size; ++i) seeds[i] = derive_seed(seed, i);
  const std::vector<Condition> conds(group_size, net_cond);
  const diffusion::Denoiser f = diffusion::model_denoiser(params);
  diffusion::SampleBatch batch =
      sampler == SamplerKind::ode
          ? diffusion::sample_ode(f, conds, seeds, steps, params.arch.data_dim)
          : diffusion::sample_sde(f, conds, seeds, steps, noise_scale, params.arch.data_dim);
  std::vector<double> r(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    const auto row = batch.samples.row(static_cast<Eigen::Index>(i));
    r[i] = reward(target, std::span<const double>(row.data(), row.size()));
  }
  if (trajectories != nullptr) *trajectories = std::move(batch.trajectories);
  return pref::make_group(net_cond, target, std::move(batch.samples), std::move(r), eps_std);
}

namespace {

struct PlannedGroup {
  Condition target;
  Condition net_cond;
  pref::DiffusionDraw draw;
};

/// Per-iteration random choices, drawn in a fixed order from the iteration
/// stream; shared by every trainer.
std::vector<PlannedGroup> plan_iteration(const TrainConfig& config, int iteration) {
  Rng rng(derive_seed(config.seed, kIterStream, iteration));
  const double t_lo = std::max(config.t_min, diffusion::kDefaultTFloor);
  std::vector<PlannedGroup> plan;
  for (int b = 0; b < config.groups_per_iter; ++b) {
    PlannedGroup g;
    g.target = config.conditional() ? Condition(static_cast<int>(rng.index(config.task.modes))) : Condition::null();
    g.net_cond = rng.bernoulli(config.cond_drop) ? Condition::null() : g.target;
    g.draw.t = rng.uniform(t_lo, 1.0);
    g.draw.eps = {rng.normal(), rng.normal()};
    plan.push_back(std::move(g));
  }
  return plan;
}

std::pair<std::size_t, std::size_t> best_and_worst(const std::vector<double>& r) {
  std::size_t best = 0, worst = 0;
  for (std::size_t i = 1; i < r.size(); ++i) {
    if (r[i] > r[best]) best = i;
    if (r[i] < r[worst]) worst = i;
  }
  return {best, worst};
}

TrainResult run_preference(const TrainConfig& config, const nn::ModelParams& theta_init,
                           const rewards::RewardFn& reward, const EvalObserver& observer, bool pairwise,
                           bool offline) {
  config.validate();
  theta_init.validate();
  const nn::MlpArch& arch = theta_init.arch;
  const diffusion::Schedule schedule{config.weighting};
  EvalLog log(config, reward, observer);

  TrainResult res;
  res.params = theta_init;
  const nn::ModelParams theta_ref = theta_init;
  nn::ModelParams theta_minus = theta_init;
  nn::OptimizerState opt = make_optimizer(config.optimizer, config.lr, theta_init.size());
  log.record(0, res.params, 0, res.metrics);
  nn::ModelParams last_good = res.params;

  for (int n = 0; n < config.iterations; ++n) {
    const std::vector<PlannedGroup> plan = plan_iteration(config, n);
    const nn::ModelParams& rollout_model = offline ? theta_ref : theta_minus;

    struct Item {
      pref::Group group;
      pref::DiffusionDraw draw;
      Matrix pair;
      std::vector<double> ref;
    };
    std::vector<Item> items;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const PlannedGroup& p = plan[b];
      res.sampled_t.push_back(p.draw.t);
      ++res.total_groups;
      if (p.net_cond.is_null()) ++res.null_condition_groups;
      pref::Group g = generate_group(rollout_model, p.net_cond, p.target, reward, config.group_size,
                                     config.sampler, config.rollout_steps, config.noise_scale,
                                     derive_seed(config.seed, kRolloutStream, n, b), config.eps_std);
      if (g.degenerate) {
        ++res.degenerate_groups;
        continue;
      }
      Item it{std::move(g), p.draw, {}, {}};
      if (pairwise) {
        const auto [best, worst] = best_and_worst(it.group.rewards);
        it.pair.resize(2, it.group.samples.cols());
        it.pair.row(0) = it.group.samples.row(static_cast<Eigen::Index>(best));
        it.pair.row(1) = it.group.samples.row(static_cast<Eigen::Index>(worst));
        it.ref = pref::denoising_losses(theta_ref, it.pair, it.group.cond, it.draw);
      } else {
        it.ref = pref::denoising_losses(theta_ref, it.group.samples, it.group.cond, it.draw);
      }
      items.push_back(std::move(it));
    }

    if (items.empty()) {
      ++res.skipped_iterations;
    } else {
      const double inv = 1.0 / static_cast<double>(items.size());
      auto loss_fn = [&](nn::Tape& tape, nn::Var theta) {
        nn::Var total{};
        for (std::size_t i = 0; i < items.size(); ++i) {
          const Item& it = items[i];
          const double lambda_t = schedule.lambda(it.draw.t);
          nn::Var l = pairwise
                          ? pref::dpo_loss_var(tape, arch, theta, it.pair, it.group.cond, it.draw, it.ref,
                                               config.beta * lambda_t)
                          : pref::dgpo_loss_var(tape, arch, theta, it.group, it.draw, it.ref, config.beta,
                                                lambda_t);
          total = i == 0 ? l : tape.add(total, l);
        }
        return tape.scale(total, inv);
      };
      nn::ValueAndGrad vg;
      try {
        vg = nn::value_and_grad(loss_fn, res.params);
      } catch (const NumericError& e) {
        throw DivergenceError("post-training diverged at iteration " + std::to_string(n) + ": " + e.what(),
                              last_good);
      }
      nn::adam_step(opt, res.params, vg.grad);
      log.add_loss(vg.value);

      if (!offline) {
        theta_minus = n < config.ema_start ? nn::ema_update(theta_minus, res.params, 0.0)
                                           : nn::ema_update(theta_minus, res.params, config.ema_decay);
      }
    }
    res.theta_shadow.push_back(res.params.values.front());
    res.ema_shadow.push_back(theta_minus.values.front());
    if (due(n, config.eval_every, config.iterations)) {
      log.record(n + 1, res.params, res.degenerate_groups, res.metrics);
      last_good = res.params;
    }
  }
  return res;
}

void require_algorithm(const TrainConfig& config, std::initializer_list<Algorithm> allowed, const char* who) {
  for (Algorithm a : allowed) {
    if (config.algorithm == a) return;
  }
  throw ConfigError(std::string(who) + " does not run algorithm '" + to_string(config.algorithm) + "'");
}

}  // namespace

TrainResult dgpo_train(const TrainConfig& config, const nn::ModelParams& theta_init,
                       const rewards::RewardFn& reward, const EvalObserver& observer) {
  require_algorithm(config, {Algorithm::dgpo}, "dgpo_train");
  return run_preference(config, theta_init, reward, observer, false, false);
}

TrainResult offline_variant(const TrainConfig& config, const nn::ModelParams& theta_init,
                            const rewards::RewardFn& reward, const EvalObserver& observer) {
  require_algorithm(config, {Algorithm::dgpo_offline, Algorithm::dpo_offline}, "offline_variant");
  return run_preference(config, theta_init, reward, observer, config.algorithm == Algorithm::dpo_offline, true);
}

TrainResult dpo_train(const TrainConfig& config, const nn::ModelParams& theta_init,
                      const rewards::RewardFn& reward, const EvalObserver& observer) {
  require_algorithm(config, {Algorithm::dpo, Algorithm::dpo_offline}, "dpo_train");
  return run_preference(config, theta_init, reward, observer, true, is_offline(config.algorithm));
}

TrainResult grpo_train(const TrainConfig& config, const nn::ModelParams& theta_init,
                       const rewards::RewardFn& reward, const EvalObserver& observer) {
  require_algorithm(config, {Algorithm::grpo}, "grpo_train");
  config.validate();
  theta_init.validate();
  EvalLog log(config, reward, observer);

  TrainResult res;
  res.params = theta_init;
  nn::OptimizerState opt = make_optimizer(config.optimizer, config.lr, theta_init.size());
  log.record(0, res.params, 0, res.metrics);
  nn::ModelParams last_good = res.params;

  for (int n = 0; n < config.iterations; ++n) {
    const std::vector<PlannedGroup> plan = plan_iteration(config, n);
    const nn::ModelParams theta_old = res.params;
    std::vector<std::vector<diffusion::RolloutTrajectory>> trajs(plan.size());
    std::vector<pref::ScoredTrajectory> items;
    int groups_used = 0;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const PlannedGroup& p = plan[b];
      ++res.total_groups;
      if (p.net_cond.is_null()) ++res.null_condition_groups;
      pref::Group g = generate_group(theta_old, p.net_cond, p.target, reward, config.group_size,
                                     SamplerKind::sde, config.rollout_steps, config.noise_scale,
                                     derive_seed(config.seed, kRolloutStream, n, b), config.eps_std, &trajs[b]);
      if (g.degenerate) {
        ++res.degenerate_groups;
        continue;
      }
      ++groups_used;
      for (std::size_t i = 0; i < g.size(); ++i) items.push_back({&trajs[b][i], g.cond, g.advantages[i]});
    }
    if (items.empty()) {
      ++res.skipped_iterations;
    } else {
      const nn::LossFn surrogate = pref::grpo_loss_fn(theta_init.arch, items, config.noise_scale, config.clip);
      const double inv = 1.0 / groups_used;
      auto loss_fn = [&](nn::Tape& tape, nn::Var theta) { return tape.scale(surrogate(tape, theta), inv); };
      for (int inner = 0; inner < config.grpo_inner_steps; ++inner) {
        nn::ValueAndGrad vg;
        try {
          vg = nn::value_and_grad(loss_fn, res.params);
        } catch (const NumericError& e) {
          throw DivergenceError("grpo diverged at iteration " + std::to_string(n) + ": " + e.what(), last_good);
        }
        nn::adam_step(opt, res.params, vg.grad);
        if (inner == 0) log.add_loss(vg.value);
      }
    }
    res.theta_shadow.push_back(res.params.values.front());
    res.ema_shadow.push_back(res.params.values.front());
    if (due(n, config.eval_every, config.iterations)) {
      log.record(n + 1, res.params, res.degenerate_groups, res.metrics);
      last_good = res.params;
    }
  }
  return res;
}

TrainResult post_train(const TrainConfig& config, const nn::ModelParams& theta_init,
                       const rewards::RewardFn& reward, const EvalObserver& observer) {
  switch (config.algorithm) {
    case Algorithm::dgpo:
      return dgpo_train(config, theta_init, reward, observer);
    case Algorithm::dgpo_offline:
    case Algorithm::dpo_offline:
      return offline_variant(config, theta_init, reward, observer);
    case Algorithm::dpo:
      return dpo_train(config, theta_init, reward, observer);
    case Algorithm::grpo:
      return grpo_train(config, theta_init, reward, observer);
  }
  throw ConfigError("unknown algorithm");
}

}  // namespace dgpo::train
