#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dgpo/errors.hpp"
#include "dgpo/losses.hpp"
#include "dgpo/mlp.hpp"
#include "test_util.hpp"

namespace dgpo::pref {
namespace {

using nn::Condition;
using nn::Matrix;
using nn::ModelParams;
using Vec = std::vector<double>;

constexpr double kLn2 = std::numbers::ln2;

double log_sigmoid(double z) { return -std::log1p(std::exp(-z)); }

DiffusionDraw random_draw(Rng& rng, double t_lo = 0.05) {
  return {rng.uniform(t_lo, 1.0), testing::random_vector(2, rng)};
}

// ---------------------------------------------------------------- advantages

TEST(Advantages, Examples) {
  EXPECT_EQ(advantages(Vec{1, 3}), (Vec{-1, 1}));
  EXPECT_EQ(advantages(Vec{2, 2, 2}), (Vec{0, 0, 0}));
  const Vec a = advantages(Vec{1, 2, 3});
  const double sd = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(a[0], -1.0 / sd, 1e-15);
  EXPECT_EQ(a[1], 0.0);
  EXPECT_NEAR(a[2], 1.0 / sd, 1e-15);
  EXPECT_NEAR(a[2], 1.22474, 1e-5);
  EXPECT_THROW(advantages(Vec{1}), InputError);
}

TEST(Advantages, StdFloorApplies) {
  const Vec a = advantages(Vec{0.0, 1e-12}, 1e-8);
  EXPECT_NEAR(a[1], 0.5e-12 / 1e-8, 1e-18);
}

TEST(Partition, Examples) {
  Group g;
  g.advantages = {-1, 1};
  partition_and_weight(g);
  EXPECT_EQ(g.positive, (std::vector<bool>{false, true}));
  EXPECT_EQ(g.weights, (Vec{1, 1}));
  EXPECT_FALSE(g.degenerate);

  Group h = make_group(Condition(0), Condition(0), Matrix::Zero(3, 2), {1, 2, 3});
  EXPECT_NEAR(h.positive_weight_sum(), 1.22474, 1e-5);
  EXPECT_NEAR(h.negative_weight_sum(), 1.22474, 1e-5);
  EXPECT_FALSE(h.positive[1]);  // zero advantage joins G⁻ with weight 0
  EXPECT_EQ(h.weights[1], 0.0);

  Group d = make_group(Condition(0), Condition(0), Matrix::Zero(4, 2), {5, 5, 5, 5});
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.positive_weight_sum(), 0.0);
  EXPECT_EQ(d.negative_weight_sum(), 0.0);
}

TEST(Partition, WeightSumsBalanceForRandomRewards) {
  Rng rng(17);
  for (int k = 0; k < 1000; ++k) {
    const std::size_t g = 2 + rng.index(23);
    Vec r(g);
    for (double& x : r) x = rng.uniform(-5, 5) * std::pow(10.0, rng.uniform(-3, 3));
    const Group grp = make_group(Condition(0), Condition(0), Matrix::Zero(static_cast<Eigen::Index>(g), 2), r);
    ASSERT_LE(std::abs(grp.positive_weight_sum() - grp.negative_weight_sum()), 1e-9) << "G=" << g;
  }
}

// ---------------------------------------------------------------- DGPO identities

TEST(Dgpo, ReferenceModelGivesLogTwo) {
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    const nn::MlpArch arch = testing::small_arch();
    const ModelParams ref = testing::random_params(arch, 1000 + k);
    const Group g = testing::random_group(2 + rng.index(10), rng, Condition(static_cast<int>(rng.index(3))));
    const auto vg = dgpo_loss(ref, ref, g, random_draw(rng), 100.0, 1.0);
    ASSERT_NEAR(vg.value, kLn2, 1e-9);
  }
}

TEST(Dgpo, GroupedEqualsCompactForm) {
  Rng rng(2);
  for (int k = 0; k < 500; ++k) {
    const Group g = testing::random_group(2 + rng.index(23), rng);
    const Vec d = testing::random_vector(g.size(), rng, 0.1);
    const double beta = rng.uniform(0.1, 200), lam = rng.uniform(0.5, 2);
    ASSERT_NEAR(dgpo_argument_grouped(d, g, beta, lam), dgpo_argument_compact(d, g.advantages, beta, lam), 1e-12);
  }
}

TEST(Dgpo, ConstantShiftOfDiffsCancels) {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const Group g = testing::random_group(2 + rng.index(23), rng);
    const Vec d = testing::random_vector(g.size(), rng, 0.01);
    const double base = dgpo_loss_from_diffs(d, g, 1.0, 1.0);
    for (double kappa : {-10.0, 1.0, 1e3}) {
      Vec s = d;
      for (double& x : s) x += kappa;
      ASSERT_NEAR(dgpo_loss_from_diffs(s, g, 1.0, 1.0), base, 1e-9) << "kappa " << kappa;
    }
  }
}

TEST(Dgpo, AffineRewardTransformLeavesLossAndGradient) {
  const nn::MlpArch arch = testing::small_arch();
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    const ModelParams ref = testing::random_params(arch, 2000 + k);
    const ModelParams theta = testing::perturbed(ref, 3000 + k);
    const Group g = testing::random_group(8, rng);
    const DiffusionDraw draw = random_draw(rng);
    const double a = rng.uniform(0.01, 50), b = rng.uniform(-10, 10);
    Vec r2 = g.rewards;
    for (double& x : r2) x = a * x + b;
    const Group h = make_group(g.cond, g.target, g.samples, r2);
    EXPECT_EQ(h.positive, g.positive);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(h.weights[i], g.weights[i], 1e-9);
    const auto lg = dgpo_loss(theta, ref, g, draw, 100.0, 1.0);
    const auto lh = dgpo_loss(theta, ref, h, draw, 100.0, 1.0);
    EXPECT_NEAR(lg.value, lh.value, 1e-9);
    EXPECT_LE(testing::max_abs_diff(lg.grad.values, lh.grad.values), 1e-9);
  }
}

TEST(Dgpo, PairGroupReducesToDpo) {
  const nn::MlpArch arch = testing::small_arch();
  Rng rng(5);
  for (int k = 0; k < 30; ++k) {
    const ModelParams ref = testing::random_params(arch, 4000 + k);
    const ModelParams theta = testing::perturbed(ref, 5000 + k, 0.1);
    const Matrix x = testing::random_matrix(2, 2, rng);
    const Vec r = testing::random_vector(2, rng);
    const Group g = make_group(Condition(2), Condition(2), x, r);
    const std::size_t w = r[0] > r[1] ? 0 : 1;
    const Vec xw{x(w, 0), x(w, 1)}, xl{x(1 - w, 0), x(1 - w, 1)};
    const DiffusionDraw draw = random_draw(rng);
    const double beta = rng.uniform(1, 200);
    const auto a = dgpo_loss(theta, ref, g, draw, beta, 1.0);
    const auto b = dpo_loss(theta, ref, xw, xl, Condition(2), draw, beta);
    EXPECT_NEAR(a.value, b.value, 1e-9);
    EXPECT_LE(testing::max_abs_diff(a.grad.values, b.grad.values), 1e-9);
  }
}

TEST(Dgpo, GradientAtReferenceIsHalfLambdaBetaAdvantageWeightedLossGradient) {
  // d/dθ softplus(λβ Σ A_i d_i) at d = 0 is (λβ/2) ∇ Σ A_i L_i^θ.
  const nn::MlpArch arch = testing::small_arch();
  Rng rng(6);
  for (int k = 0; k < 10; ++k) {
    const ModelParams ref = testing::random_params(arch, 6000 + k);
    const Group g = testing::random_group(6, rng);
    const DiffusionDraw draw = random_draw(rng);
    const double beta = 37.0, lam = 1.3;
    const auto vg = dgpo_loss(ref, ref, g, draw, beta, lam);
    Matrix adv(static_cast<Eigen::Index>(g.size()), 1);
    for (std::size_t i = 0; i < g.size(); ++i) adv(static_cast<Eigen::Index>(i), 0) = g.advantages[i];
    const auto weighted = nn::value_and_grad(
        [&](nn::Tape& t, nn::Var th) {
          return t.sum(t.mul(denoising_losses(t, arch, th, g.samples, g.cond, draw), t.constant(adv)));
        },
        ref);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const double want = 0.5 * lam * beta * weighted.grad.values[i];
      worst = std::max(worst, std::abs(vg.grad.values[i] - want));
      scale = std::max(scale, std::abs(want));
    }
    EXPECT_LE(worst, 1e-6 * scale);
  }
}

TEST(Dgpo, MonotoneInEachMembersDiff) {
  Rng rng(7);
  for (int k = 0; k < 100; ++k) {
    const Group g = testing::random_group(2 + rng.index(10), rng);
    const Vec d = testing::random_vector(g.size(), rng, 0.01);
    const double base = dgpo_loss_from_diffs(d, g, 50.0, 1.0);
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (g.advantages[j] == 0.0) continue;
      Vec e = d;
      e[j] -= 0.01;
      const double moved = dgpo_loss_from_diffs(e, g, 50.0, 1.0);
      if (g.positive[j]) {
        EXPECT_LT(moved, base);
      } else {
        EXPECT_GT(moved, base);
      }
    }
  }
}

TEST(Dgpo, DegenerateGroupIsRejected) {
  const ModelParams ref = testing::random_params(testing::small_arch(), 1);
  const Group d = make_group(Condition(0), Condition(0), Matrix::Zero(3, 2), {1, 1, 1});
  EXPECT_THROW(dgpo_loss(ref, ref, d, DiffusionDraw{0.5, {0, 0}}, 1.0, 1.0), InputError);
}

TEST(Dgpo, ZeroBetaGivesLogTwoAndZeroGradient) {
  const ModelParams ref = testing::random_params(testing::small_arch(), 1);
  Rng rng(8);
  const auto vg = dgpo_loss(testing::perturbed(ref, 2, 0.3), ref, testing::random_group(8, rng),
                            random_draw(rng), 0.0, 1.0);
  EXPECT_NEAR(vg.value, kLn2, 1e-15);
  for (double x : vg.grad.values) EXPECT_EQ(x, 0.0);
}

// ---------------------------------------------------------------- DPO

TEST(Dpo, Examples) {
  const ModelParams ref = testing::random_params(testing::small_arch(), 3);
  const auto vg = dpo_loss(ref, ref, Vec{0.1, 0.2}, Vec{-0.5, 0.3}, Condition(1), {0.4, {0.2, -1.0}}, 100.0);
  EXPECT_NEAR(vg.value, kLn2, 1e-12);
  EXPECT_NEAR(dpo_loss_from_diffs(-1.0, 0.0, 1.0), -log_sigmoid(1.0), 1e-15);
  EXPECT_NEAR(dpo_loss_from_diffs(-1.0, 0.0, 1.0), 0.31326, 1e-5);
}

TEST(Dpo, SwappingPairShiftsLossByArgument) {
  Rng rng(9);
  for (int k = 0; k < 200; ++k) {
    const double dw = rng.normal(), dl = rng.normal(), beta = rng.uniform(0.1, 5);
    const double z = -beta * (dw - dl);
    EXPECT_NEAR(dpo_loss_from_diffs(dl, dw, beta), dpo_loss_from_diffs(dw, dl, beta) + z, 1e-12);
  }
}

// ---------------------------------------------------------------- Gaussian log-density

TEST(GaussianLogprob, Examples) {
  EXPECT_NEAR(gaussian_logprob(Vec{0.3}, Vec{0.3}, 1.0 / (2.0 * std::numbers::pi)), 0.0, 1e-15);
  EXPECT_NEAR(gaussian_logprob(Vec{1.0}, Vec{0.0}, 1.0), -0.5 - 0.5 * std::log(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(gaussian_logprob(Vec{1.0}, Vec{0.0}, 1.0), -1.41894, 1e-5);
  EXPECT_THROW(gaussian_logprob(Vec{1.0}, Vec{0.0}, 0.0), InputError);
}

TEST(GaussianLogprob, DensityIntegratesToOne) {
  for (double var : {0.01, 0.3, 2.0}) {
    const double mean = 0.4, sd = std::sqrt(var);
    const double lo = mean - 12 * sd, hi = mean + 12 * sd;
    const int n = 200000;
    const double h = (hi - lo) / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      acc += w * std::exp(gaussian_logprob(Vec{lo + i * h}, Vec{mean}, var));
    }
    EXPECT_NEAR(acc * h, 1.0, 1e-6) << "variance " << var;
  }
}

// ---------------------------------------------------------------- GRPO

struct GrpoCase {
  ModelParams old_params;
  diffusion::SdeSample rollout;
};

GrpoCase grpo_case(const nn::MlpArch& arch, std::uint64_t seed, double a = 0.7, int steps = 4) {
  GrpoCase c{testing::random_params(arch, seed, 0.3), {}};
  c.rollout = diffusion::sde_sample(c.old_params, Condition(1), diffusion::SamplerConfig{steps, a, seed + 1});
  return c;
}

TEST(Grpo, RatioOneGivesMinusAdvantage) {
  const auto c = grpo_case(testing::small_arch(), 10);
  for (double adv : {-1.3, 0.4, 2.0}) {
    const auto l = grpo_loss(c.old_params, c.rollout.trajectory, Condition(1), adv, 0.7, 0.2);
    EXPECT_NEAR(l.value, -adv, 1e-12);
    for (const auto& s : l.steps) EXPECT_NEAR(s.ratio(), 1.0, 1e-12);
  }
}

TEST(Grpo, ZeroAdvantageHasZeroLossAndGradient) {
  const auto c = grpo_case(testing::small_arch(), 11);
  const auto l = grpo_loss(testing::perturbed(c.old_params, 3), c.rollout.trajectory, Condition(1), 0.0, 0.7, 0.2);
  EXPECT_EQ(l.value, 0.0);
  for (double g : l.grad.values) EXPECT_EQ(g, 0.0);
}

nn::MlpArch scalar_arch() {
  nn::MlpArch arch;
  arch.data_dim = 1;
  arch.output_dim = 1;
  arch.hidden = {4};
  arch.time_dim = 2;
  arch.cond_rows = 0;
  return arch;
}

TEST(Grpo, SingleOneDimensionalStepMatchesClosedForm) {
  const ModelParams theta = testing::random_params(scalar_arch(), 12, 0.4);
  const double t = 0.8, dt = 0.2, a = 0.5;
  const double x = 0.3, old_mean = 0.1, var = a * a * t * t * dt, x_next = 0.25;
  diffusion::RolloutTrajectory tr;
  tr.steps.push_back({t, dt, {x}, {old_mean}, var, {x_next}});
  const double xhat = nn::mlp_forward(theta, Vec{x}, t, Condition::null())[0];
  const double c_x = 1.0 - dt / t - dt * a * a / 2.0;
  const double c_hat = dt / t + dt * a * a * (1.0 - t) / 2.0;
  const double new_mean = c_x * x + c_hat * xhat;
  auto logn = [&](double m) { return -(x_next - m) * (x_next - m) / (2 * var) - 0.5 * std::log(2 * std::numbers::pi * var); };
  const double ratio = std::exp(logn(new_mean) - logn(old_mean));
  for (double adv : {0.7, -0.7}) {
    const auto l = grpo_loss(theta, tr, Condition::null(), adv, a, 0.2);
    ASSERT_EQ(l.steps.size(), 1u);
    EXPECT_NEAR(l.steps[0].ratio(), ratio, 1e-12);
    const double clipped = std::clamp(ratio, 0.8, 1.2);
    EXPECT_NEAR(l.value, -std::min(ratio * adv, clipped * adv), 1e-12);
  }
}

TEST(Grpo, RatioOneGradientIsPolicyGradient) {
  const nn::MlpArch arch = testing::small_arch();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto c = grpo_case(arch, 20 + s);
    const double adv = 0.9;
    const auto l = grpo_loss(c.old_params, c.rollout.trajectory, Condition(1), adv, 0.7, 0.2);
    // -A · mean_k log p_θ(x_{k+1} | x_k), differentiated by central differences
    auto pg = [&](const ModelParams& p) {
      double acc = 0.0;
      for (const auto& st : c.rollout.trajectory.steps) {
        const Vec xhat = nn::mlp_forward(p, st.x, st.t, Condition(1));
        const auto k = diffusion::transition_coefficients(st.t, st.dt, 0.7);
        const Vec mean{k.c_x * st.x[0] + k.c_hat * xhat[0], k.c_x * st.x[1] + k.c_hat * xhat[1]};
        acc += gaussian_logprob(st.x_next, mean, st.variance);
      }
      return -adv * acc / static_cast<double>(c.rollout.trajectory.steps.size());
    };
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < c.old_params.size(); ++i) {
      ModelParams up = c.old_params, dn = c.old_params;
      up.values[i] += 1e-5;
      dn.values[i] -= 1e-5;
      const double fd = (pg(up) - pg(dn)) / 2e-5;
      worst = std::max(worst, std::abs(fd - l.grad.values[i]));
      scale = std::max(scale, std::abs(fd));
    }
    EXPECT_LE(worst, 1e-4 * scale) << "seed " << s;
  }
}

TEST(Grpo, ClippedRegionHasZeroGradient) {
  const ModelParams theta = testing::random_params(scalar_arch(), 13, 0.4);
  const double t = 0.6, dt = 0.2, a = 0.5, x = -0.2;
  const double xhat = nn::mlp_forward(theta, Vec{x}, t, Condition::null())[0];
  const auto k = diffusion::transition_coefficients(t, dt, a);
  const double mean = k.c_x * x + k.c_hat * xhat;
  diffusion::RolloutTrajectory tr;
  // next state sits near the current mean and far from the recorded one: ratio ≫ 1.2
  tr.steps.push_back({t, dt, {x}, {mean + 0.3}, a * a * t * t * dt, {mean + 0.02}});
  const auto up = grpo_loss(theta, tr, Condition::null(), 1.0, a, 0.2);
  ASSERT_GT(up.steps[0].ratio(), 1.2);
  EXPECT_NEAR(up.value, -1.2, 1e-12);
  for (double g : up.grad.values) EXPECT_EQ(g, 0.0);
  // with a negative advantage the unclipped term is the minimum and carries gradient
  const auto down = grpo_loss(theta, tr, Condition::null(), -1.0, a, 0.2);
  EXPECT_NEAR(down.value, up.steps[0].ratio(), 1e-9 * up.steps[0].ratio());
  double norm = 0.0;
  for (double g : down.grad.values) norm += g * g;
  EXPECT_GT(norm, 0.0);
}

TEST(Grpo, RejectsDeterministicRecords) {
  const auto c = grpo_case(testing::small_arch(), 40, 0.0);
  EXPECT_THROW(grpo_loss(c.old_params, c.rollout.trajectory, Condition(1), 1.0, 0.0, 0.2), InputError);
}

// ---------------------------------------------------------------- gradient suites

TEST(GradientSuite, DenoisingLoss) {
  const nn::MlpArch arch = testing::small_arch();
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(100 + s);
    const Matrix x = testing::random_matrix(4, 2, rng);
    const DiffusionDraw draw = random_draw(rng);
    const Condition c(static_cast<int>(s % 3));
    const auto rep = nn::finite_diff_check(
        [&](nn::Tape& t, nn::Var th) { return t.sum(denoising_losses(t, arch, th, x, c, draw)); },
        testing::random_params(arch, s), 1e-4, 1e-4);
    EXPECT_TRUE(rep.passed) << "instance " << s << " err " << rep.max_rel_error;
  }
}

TEST(GradientSuite, DgpoLoss) {
  const nn::MlpArch arch = testing::small_arch();
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(200 + s);
    const ModelParams ref = testing::random_params(arch, s);
    const Group g = testing::random_group(8, rng);
    const auto fn = dgpo_loss_fn(ref, g, random_draw(rng), 10.0, 1.0);
    const auto rep = nn::finite_diff_check(fn, testing::perturbed(ref, 300 + s, 0.1), 1e-4, 1e-4);
    EXPECT_TRUE(rep.passed) << "instance " << s << " err " << rep.max_rel_error;
  }
}

TEST(GradientSuite, DpoLoss) {
  const nn::MlpArch arch = testing::small_arch();
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(400 + s);
    const ModelParams ref = testing::random_params(arch, s);
    const Vec xw = testing::random_vector(2, rng), xl = testing::random_vector(2, rng);
    const auto fn = dpo_loss_fn(ref, xw, xl, Condition(0), random_draw(rng), 10.0);
    const auto rep = nn::finite_diff_check(fn, testing::perturbed(ref, 500 + s, 0.1), 1e-4, 1e-4);
    EXPECT_TRUE(rep.passed) << "instance " << s << " err " << rep.max_rel_error;
  }
}

TEST(GradientSuite, GrpoLoss) {
  const nn::MlpArch arch = testing::small_arch();
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto c = grpo_case(arch, 600 + s);
    std::vector<ScoredTrajectory> items{{&c.rollout.trajectory, Condition(1), s % 2 ? 0.8 : -1.1}};
    const auto fn = grpo_loss_fn(arch, items, 0.7, 0.2);
    const auto rep = nn::finite_diff_check(fn, testing::perturbed(c.old_params, 700 + s, 0.01), 1e-4, 1e-4);
    EXPECT_TRUE(rep.passed) << "instance " << s << " err " << rep.max_rel_error;
  }
}

}  // namespace
}  // namespace dgpo::pref
