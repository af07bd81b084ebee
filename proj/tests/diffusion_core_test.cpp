#include <gtest/gtest.h>

#include <cmath>

#include "dgpo/errors.hpp"
#include "dgpo/mlp.hpp"
#include "dgpo/sampler.hpp"
#include "dgpo/schedule.hpp"
#include "test_util.hpp"

namespace dgpo::diffusion {
namespace {

using nn::Condition;
using nn::Matrix;

using Vec = std::vector<double>;

Denoiser constant_denoiser(Vec value) {
  return [value](const Matrix& x, std::span<const double>, std::span<const Condition>) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) out(i, j) = value[static_cast<std::size_t>(j)];
    }
    return out;
  };
}

TEST(Schedule, RectifiedFlowCoefficients) {
  const Schedule s;
  EXPECT_EQ(s.alpha(0.25), 0.75);
  EXPECT_EQ(s.sigma(0.25), 0.25);
  EXPECT_EQ(s.lambda(0.25), 1.0);
  const Schedule inv{Weighting::inverse_t};
  EXPECT_DOUBLE_EQ(inv.lambda(0.25), 4.0);
  EXPECT_DOUBLE_EQ(inv.lambda(0.0), 1.0 / kDefaultTFloor);
}

TEST(ForwardDiffuse, Examples) {
  EXPECT_EQ(forward_diffuse(Vec{1, 0}, 0.5, Vec{0, 1}), (Vec{0.5, 0.5}));
  EXPECT_EQ(forward_diffuse(Vec{0.3, -2}, 1.0, Vec{0.7, 0.1}), (Vec{0.7, 0.1}));
  const Vec x{0.4, -1.1}, eps{1.3, 0.2};
  const Vec near = forward_diffuse(x, kDefaultTFloor, eps);
  const double bound = kDefaultTFloor * std::hypot(eps[0] - x[0], eps[1] - x[1]);
  EXPECT_LE(std::hypot(near[0] - x[0], near[1] - x[1]), bound + 1e-15);
}

TEST(ForwardDiffuse, AffineDecomposition) {
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const Vec x = testing::random_vector(2, rng), eps = testing::random_vector(2, rng);
    const double t = rng.uniform();
    const Vec a = forward_diffuse(x, t, Vec{0, 0});
    const Vec b = forward_diffuse(Vec{0, 0}, t, eps);
    const Vec both = forward_diffuse(x, t, eps);
    for (int j = 0; j < 2; ++j) {
      EXPECT_DOUBLE_EQ(a[j], (1 - t) * x[j]);
      EXPECT_DOUBLE_EQ(b[j], t * eps[j]);
      EXPECT_NEAR(both[j], a[j] + b[j], 1e-15);
    }
  }
}

TEST(DenoisingLoss, ZeroNetGivesSquaredNormOfData) {
  const auto p = nn::ModelParams::zeros(nn::MlpArch{});
  EXPECT_EQ(denoising_loss(p, Vec{1, 0}, 0.4, Vec{0.3, 0.9}, Condition(0)), 1.0);
}

TEST(DenoisingLoss, MatchesHandComposition) {
  const auto p = testing::random_params(testing::small_arch(), 4);
  Rng rng(5);
  for (int k = 0; k < 10; ++k) {
    const Vec x = testing::random_vector(2, rng), eps = testing::random_vector(2, rng);
    const double t = rng.uniform(0.01, 1.0);
    const Condition c(static_cast<int>(k % 3));
    const Vec xt{(1 - t) * x[0] + t * eps[0], (1 - t) * x[1] + t * eps[1]};
    const Vec xhat = nn::mlp_forward(p, xt, t, c);
    const double want = (xhat[0] - x[0]) * (xhat[0] - x[0]) + (xhat[1] - x[1]) * (xhat[1] - x[1]);
    EXPECT_EQ(denoising_loss(p, x, t, eps, c), want);
  }
}

TEST(Velocity, Examples) {
  EXPECT_EQ(x_to_velocity(Vec{0.3, 0.4}, Vec{0.3, 0.4}, 0.6), (Vec{0, 0}));
  EXPECT_EQ(x_to_velocity(Vec{0, 0}, Vec{1, 1}, 0.5), (Vec{2, 2}));
  EXPECT_THROW(x_to_velocity(Vec{0, 0}, Vec{1, 1}, 0.0), InputError);
}

TEST(Velocity, PerfectDenoiserRecoversEpsMinusX) {
  Rng rng(8);
  for (int k = 0; k < 50; ++k) {
    const Vec x = testing::random_vector(2, rng), eps = testing::random_vector(2, rng);
    const double t = rng.uniform(0.01, 1.0);
    const Vec v = x_to_velocity(x, forward_diffuse(x, t, eps), t);
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(v[j], eps[j] - x[j], 1e-12);
  }
}

TEST(Score, Examples) {
  const Vec xhat{0.5, -0.2};
  const double t = 0.3;
  const Vec s0 = score_from_xpred(xhat, Vec{(1 - t) * xhat[0], (1 - t) * xhat[1]}, t);
  EXPECT_NEAR(s0[0], 0.0, 1e-15);
  EXPECT_NEAR(s0[1], 0.0, 1e-15);
  EXPECT_EQ(score_from_xpred(Vec{0.9, 0.1}, Vec{0.4, -0.6}, 1.0), (Vec{-0.4, 0.6}));
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const Vec a = testing::random_vector(2, rng), b = testing::random_vector(2, rng);
    const double tt = rng.uniform(0.05, 1.0);
    const Vec s = score_from_xpred(a, b, tt);
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(s[j], -(b[j] - (1 - tt) * a[j]) / (tt * tt), 1e-12);
  }
}

TEST(Sampler, TimeGridAndCoefficients) {
  const Vec g = time_grid(4);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g[3], 0.25);
  const auto c = transition_coefficients(0.6, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(c.c_x, 1.0 - 0.1 / 0.6);
  EXPECT_DOUBLE_EQ(c.c_hat, 0.1 / 0.6);
}

TEST(Sampler, OneStepWithConstantOracleHitsTarget) {
  const Vec target{0.6, -0.8};
  for (std::uint64_t seed : {0ull, 1ull, 99ull, 123456789ull}) {
    const Condition c[1] = {Condition(0)};
    const std::uint64_t s[1] = {seed};
    const auto b = sample_ode(constant_denoiser(target), c, s, 1, 2);
    EXPECT_EQ(b.samples(0, 0), target[0]);
    EXPECT_EQ(b.samples(0, 1), target[1]);
  }
}

TEST(Sampler, SameSeedSameSample) {
  const auto p = testing::random_params(testing::small_arch(), 7, 0.3);
  SamplerConfig cfg{10, 0.0, 42};
  EXPECT_EQ(ode_sample(p, Condition(1), cfg), ode_sample(p, Condition(1), cfg));
  cfg.noise_scale = 0.7;
  EXPECT_EQ(sde_sample(p, Condition(1), cfg).x, sde_sample(p, Condition(1), cfg).x);
  cfg.seed = 43;
  EXPECT_NE(sde_sample(p, Condition(1), cfg).x, sde_sample(p, Condition(1), SamplerConfig{10, 0.7, 42}).x);
}

TEST(Sampler, ZeroNoiseSdeEqualsOde) {
  const auto p = testing::random_params(nn::MlpArch{}, 9, 0.15);
  for (int steps : {1, 5, 10, 50}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const SamplerConfig cfg{steps, 0.0, seed};
      const Vec ode = ode_sample(p, Condition(static_cast<int>(seed)), cfg);
      const Vec sde = sde_sample(p, Condition(static_cast<int>(seed)), cfg).x;
      EXPECT_LE(testing::max_abs_diff(ode, sde), 1e-12) << "steps " << steps;
    }
  }
}

TEST(Sampler, RecordedVarianceIsAlphaSquaredTSquaredDt) {
  const auto p = testing::random_params(testing::small_arch(), 1, 0.3);
  const double a = 0.7;
  const auto s = sde_sample(p, Condition(0), SamplerConfig{10, a, 3});
  ASSERT_EQ(s.trajectory.steps.size(), 10u);
  for (const auto& st : s.trajectory.steps) EXPECT_DOUBLE_EQ(st.variance, a * a * st.t * st.t * st.dt);
}

TEST(Sampler, RecordedMeanIsReproducibleFromCoefficients) {
  const auto p = testing::random_params(testing::small_arch(), 1, 0.3);
  const auto s = sde_sample(p, Condition(2), SamplerConfig{6, 0.5, 11});
  for (const auto& st : s.trajectory.steps) {
    const Vec xhat = nn::mlp_forward(p, st.x, st.t, Condition(2));
    const auto c = transition_coefficients(st.t, st.dt, 0.5);
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(st.mean[j], c.c_x * st.x[j] + c.c_hat * xhat[j], 1e-12);
  }
  // consecutive records chain
  for (std::size_t k = 1; k < s.trajectory.steps.size(); ++k) {
    EXPECT_EQ(s.trajectory.steps[k].x, s.trajectory.steps[k - 1].x_next);
  }
  EXPECT_EQ(s.trajectory.steps.back().x_next, s.x);
}

TEST(Sampler, MonteCarloIncrementVariance) {
  // Frozen drift: the denoiser ignores its input, so x_next - mean is pure injected noise.
  const int n = 10000, steps = 10;
  const double a = 0.7;
  std::vector<Condition> c(n, Condition(0));
  std::vector<std::uint64_t> seeds(n);
  for (int i = 0; i < n; ++i) seeds[i] = derive_seed(2024, i);
  const auto b = sample_sde(constant_denoiser({0.2, -0.1}), c, seeds, steps, a, 2);
  for (int k = 0; k < steps; ++k) {
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& st = b.trajectories[i].steps[k];
      for (int j = 0; j < 2; ++j) {
        const double inc = st.x_next[j] - st.mean[j];
        sum += inc;
        sq += inc * inc;
      }
    }
    const double m = sum / (2.0 * n);
    const double var = sq / (2.0 * n) - m * m;
    const double t = 1.0 - static_cast<double>(k) / steps;
    const double want = a * a * t * t / steps;
    EXPECT_NEAR(var / want, 1.0, 0.05) << "step " << k;
  }
}

TEST(Sampler, RejectsBadConfig) {
  const auto p = nn::ModelParams::zeros(testing::small_arch());
  EXPECT_THROW(ode_sample(p, Condition(0), SamplerConfig{0, 0.0, 1}), InputError);
  EXPECT_THROW(sde_sample(p, Condition(0), SamplerConfig{10, -1.0, 1}), InputError);
}

}  // namespace
}  // namespace dgpo::diffusion
