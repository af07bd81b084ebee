#include "dgpo/sampler.hpp"

#include <cmath>

#include "dgpo/errors.hpp"
#include "dgpo/mlp.hpp"
#include "dgpo/rng.hpp"

namespace dgpo::diffusion {

void SamplerConfig::validate() const {
  if (steps < 1) throw InputError("sampler steps must be >= 1");
  if (!std::isfinite(noise_scale) || noise_scale < 0.0) {
    throw InputError("sampler noise scale must be finite and >= 0");
  }
}

Denoiser model_denoiser(const nn::ModelParams& params) {
  return [&params](const Matrix& x, std::span<const double> t, std::span<const Condition> c) {
    return nn::mlp_forward(params, x, params.arch.time_dim > 0 ? t : std::span<const double>{},
                           params.arch.uses_condition() ? c : std::span<const Condition>{});
  };
}

std::vector<double> time_grid(int steps) {
  if (steps < 1) throw InputError("time_grid: steps must be >= 1");
  std::vector<double> g(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) g[k] = 1.0 - static_cast<double>(k) / steps;
  return g;
}

Matrix initial_noise(std::span<const std::uint64_t> seeds, std::size_t dim) {
  Matrix x(static_cast<Eigen::Index>(seeds.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    Rng rng(seeds[i]);
    for (std::size_t j = 0; j < dim; ++j) x(i, j) = rng.normal();
  }
  return x;
}

MeanCoefficients transition_coefficients(double t, double dt, double noise_scale) {
  // μ = x - dt·v + dt·(g²/2)·s with v = (x - x̂)/t, s = ((1-t)x̂ - x)/t², g = a·t
  const double half_a2 = 0.5 * noise_scale * noise_scale;
  return {1.0 - dt / t - dt * half_a2, dt / t + dt * half_a2 * (1.0 - t)};
}

namespace {

void check_inputs(std::span<const Condition> cond, std::span<const std::uint64_t> seeds, int steps) {
  if (cond.size() != seeds.size()) throw InputError("sampler: need one condition per seed");
  if (steps < 1) throw InputError("sampler: steps must be >= 1");
}

void check_finite(const Matrix& x, int step) {
  if (!x.allFinite()) {
    throw NumericError("sampler state became non-finite at step " + std::to_string(step));
  }
}

std::vector<double> row_of(const Matrix& m, Eigen::Index r) {
  return {m.row(r).data(), m.row(r).data() + m.cols()};
}

}  // namespace

SampleBatch sample_ode(const Denoiser& f, std::span<const Condition> cond,
                       std::span<const std::uint64_t> seeds, int steps, std::size_t dim,
                       bool keep_path) {
  check_inputs(cond, seeds, steps);
  const auto n = static_cast<Eigen::Index>(seeds.size());
  SampleBatch out;
  Matrix x = initial_noise(seeds, dim);
  if (keep_path) out.trajectories.resize(seeds.size());
  const double dt = 1.0 / steps;
  const std::vector<double> grid = time_grid(steps);
  for (int k = 0; k < steps; ++k) {
    const double t = grid[k];
    const std::vector<double> ts(seeds.size(), t);
    const Matrix xhat = f(x, ts, cond);
    const MeanCoefficients c = transition_coefficients(t, dt, 0.0);
    Matrix next = c.c_x * x + c.c_hat * xhat;
    check_finite(next, k);
    if (keep_path) {
      for (Eigen::Index i = 0; i < n; ++i) {
        out.trajectories[i].steps.push_back({t, dt, row_of(x, i), row_of(next, i), 0.0, row_of(next, i)});
      }
    }
    x = std::move(next);
  }
  out.samples = std::move(x);
  return out;
}

SampleBatch sample_sde(const Denoiser& f, std::span<const Condition> cond,
                       std::span<const std::uint64_t> seeds, int steps, double noise_scale,
                       std::size_t dim) {
  check_inputs(cond, seeds, steps);
  if (!std::isfinite(noise_scale) || noise_scale < 0.0) {
    throw InputError("sample_sde: noise scale must be finite and >= 0");
  }
  const auto n = static_cast<Eigen::Index>(seeds.size());
  std::vector<Rng> rngs;
  rngs.reserve(seeds.size());
  Matrix x(n, static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < n; ++i) {
    rngs.emplace_back(seeds[i]);
    for (std::size_t j = 0; j < dim; ++j) x(i, j) = rngs[i].normal();
  }
  SampleBatch out;
  out.trajectories.resize(seeds.size());
  const double dt = 1.0 / steps;
  const std::vector<double> grid = time_grid(steps);
  for (int k = 0; k < steps; ++k) {
    const double t = grid[k];
    const std::vector<double> ts(seeds.size(), t);
    const Matrix xhat = f(x, ts, cond);
    const double g = noise_scale * t;
    const MeanCoefficients c = transition_coefficients(t, dt, noise_scale);
    const Matrix mean = c.c_x * x + c.c_hat * xhat;
    const double variance = g * g * dt;
    const double sd = g * std::sqrt(dt);
    Matrix next = mean;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < next.cols(); ++j) next(i, j) += sd * rngs[i].normal();
    }
    check_finite(next, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.trajectories[i].steps.push_back(
          {t, dt, row_of(x, i), row_of(mean, i), variance, row_of(next, i)});
    }
    x = std::move(next);
  }
  out.samples = std::move(x);
  return out;
}

std::vector<double> ode_sample(const nn::ModelParams& params, Condition cond,
                               const SamplerConfig& config) {
  config.validate();
  const Condition c[1] = {cond};
  const std::uint64_t s[1] = {config.seed};
  const SampleBatch b = sample_ode(model_denoiser(params), c, s, config.steps, params.arch.data_dim);
  return row_of(b.samples, 0);
}

SdeSample sde_sample(const nn::ModelParams& params, Condition cond, const SamplerConfig& config) {
  config.validate();
  const Condition c[1] = {cond};
  const std::uint64_t s[1] = {config.seed};
  SampleBatch b = sample_sde(model_denoiser(params), c, s, config.steps, config.noise_scale,
                             params.arch.data_dim);
  return {row_of(b.samples, 0), std::move(b.trajectories[0])};
}

}  // namespace dgpo::diffusion
