#include "dgpo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "dgpo/errors.hpp"
#include "dgpo/rng.hpp"
#include "dgpo/sampler.hpp"

namespace dgpo::train {

double w2_squared_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("w2: empty point set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Walk the two quantile functions; mass is counted in units of 1/(n·m).
  const auto n = static_cast<std::uint64_t>(a.size());
  const auto m = static_cast<std::uint64_t>(b.size());
  std::uint64_t i = 0, j = 0, pos = 0;
  double total = 0.0;
  while (i < n && j < m) {
    const std::uint64_t next_a = (i + 1) * m;
    const std::uint64_t next_b = (j + 1) * n;
    const std::uint64_t next = std::min(next_a, next_b);
    const double diff = a[i] - b[j];
    total += static_cast<double>(next - pos) * diff * diff;
    pos = next;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return total / (static_cast<double>(n) * static_cast<double>(m));
}

double sliced_w2(const Matrix& a, const Matrix& b, int n_projections, std::uint64_t seed) {
  if (a.rows() == 0 || b.rows() == 0) throw InputError("sliced_w2: empty point set");
  if (a.cols() != b.cols()) throw InputError("sliced_w2: point sets differ in dimension");
  if (n_projections < 1) throw InputError("sliced_w2: need at least one projection");
  Rng rng(seed);
  const Eigen::Index d = a.cols();
  Eigen::VectorXd dir(d);
  double acc = 0.0;
  for (int p = 0; p < n_projections; ++p) {
    do {
      for (Eigen::Index k = 0; k < d; ++k) dir(k) = rng.normal();
    } while (dir.norm() == 0.0);
    dir.normalize();
    const Eigen::VectorXd pa = a * dir;
    const Eigen::VectorXd pb = b * dir;
    acc += w2_squared_1d({pa.data(), pa.data() + pa.size()}, {pb.data(), pb.data() + pb.size()});
  }
  return std::sqrt(acc / n_projections);
}

std::vector<Condition> cycle_conditions(std::size_t n, std::size_t classes, bool conditional) {
  std::vector<Condition> out(n, Condition::null());
  if (conditional && classes > 0) {
    for (std::size_t i = 0; i < n; ++i) out[i] = Condition(static_cast<int>(i % classes));
  }
  return out;
}

Matrix sample_mixture(const rewards::MixtureTask& task, std::span<const Condition> labels,
                      std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(static_cast<Eigen::Index>(labels.size()), 2);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t k = labels[i].is_null() ? rng.index(task.modes) : static_cast<std::size_t>(labels[i].index());
    const auto mu = task.center(k);
    x(i, 0) = mu[0] + task.mode_std * rng.normal();
    x(i, 1) = mu[1] + task.mode_std * rng.normal();
  }
  return x;
}

Evaluation evaluate(const nn::ModelParams& params, const rewards::RewardFn& reward,
                    const Matrix& holdout, std::uint64_t seed, const EvalSettings& settings) {
  if (settings.n_samples < 1) throw InputError("evaluate: need at least one sample");
  const auto n = static_cast<std::size_t>(settings.n_samples);
  Evaluation ev;
  ev.labels = cycle_conditions(n, params.arch.num_classes(), settings.conditional);
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = derive_seed(seed, i);
  ev.samples = diffusion::sample_ode(diffusion::model_denoiser(params), ev.labels, seeds,
                                     settings.rollout_steps, params.arch.data_dim)
                   .samples;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = ev.samples.row(static_cast<Eigen::Index>(i));
    total += reward(ev.labels[i], std::span<const double>(row.data(), row.size()));
  }
  ev.record.mean_reward = total / static_cast<double>(n);
  ev.record.sliced_w2 = sliced_w2(ev.samples, holdout, settings.projections, settings.projection_seed);
  return ev;
}

}  // namespace dgpo::train
