#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "dgpo/autodiff.hpp"
#include "dgpo/checkpoint.hpp"
#include "dgpo/errors.hpp"
#include "dgpo/mlp.hpp"
#include "dgpo/optim.hpp"
#include "dgpo/rng.hpp"
#include "test_util.hpp"

namespace dgpo {
namespace {

using nn::Condition;
using nn::Matrix;
using nn::ModelParams;
using nn::Tape;
using nn::Var;
using testing::random_params;

// ---------------------------------------------------------------- rng

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(Rng, DeriveSeedDependsOnlyOnPath) {
  EXPECT_EQ(derive_seed(7, 3, 5), derive_seed(derive_seed(7, 3), 5));
  EXPECT_NE(derive_seed(7, 3, 5), derive_seed(7, 5, 3));
  EXPECT_NE(derive_seed(7, 0), derive_seed(8, 0));
}

TEST(Rng, StateRoundTripResumesStream) {
  Rng a(9);
  a.normal();
  a.uniform();
  const std::string s = a.state();
  std::vector<double> expect;
  for (int i = 0; i < 10; ++i) expect.push_back(a.normal());
  Rng b(1);
  b.set_state(s);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(b.normal(), expect[i]);
}

// ---------------------------------------------------------------- params

TEST(Params, LayoutMatchesCount) {
  const nn::MlpArch a;
  // table 9x16, 34->64, 64->64, 64->64, 64->2
  EXPECT_EQ(a.param_count(), 9u * 16 + 34 * 64 + 64 + 2 * (64 * 64 + 64) + 64 * 2 + 2);
  EXPECT_EQ(a.condition_row(Condition::null()), 8u);
  EXPECT_THROW(a.condition_row(Condition(8)), InputError);
}

TEST(Params, InitZeroesOutputLayer) {
  const nn::MlpArch a = testing::small_arch();
  const ModelParams p = nn::init_params(a, 3);
  const auto out = nn::mlp_forward(p, std::vector<double>{0.4, -0.2}, 0.5, Condition(0));
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);
}

TEST(Params, ValidateRejectsWrongSizeAndNonFinite) {
  ModelParams p = ModelParams::zeros(testing::small_arch());
  p.values.push_back(0.0);
  EXPECT_THROW(p.validate(), InputError);
  p.values.pop_back();
  p.values[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(p.validate(), InputError);
}

// ---------------------------------------------------------------- mlp

TEST(Mlp, ZeroParamsGiveZeroOutput) {
  const ModelParams p = ModelParams::zeros(nn::MlpArch{});
  const auto out = nn::mlp_forward(p, std::vector<double>{3.0, -1.0}, 0.7, Condition(4));
  EXPECT_EQ(out, (std::vector<double>{0.0, 0.0}));
}

TEST(Mlp, RepeatedCallsAreBitIdentical) {
  const ModelParams p = random_params(nn::MlpArch{}, 5, 0.2);
  const std::vector<double> x{0.3, -0.7};
  EXPECT_EQ(nn::mlp_forward(p, x, 0.5, Condition(2)), nn::mlp_forward(p, x, 0.5, Condition(2)));
}

TEST(Mlp, MatchesNaiveOracle) {
  const ModelParams p = random_params(nn::MlpArch{}, 11, 0.2);
  const std::vector<double> x{0.3, -0.7};
  const auto got = nn::mlp_forward(p, x, 0.5, Condition(2));
  const auto want = testing::naive_forward(p, x, 0.5, Condition(2));
  EXPECT_LT(testing::max_abs_diff(got, want), 1e-12);
  const auto got_null = nn::mlp_forward(p, x, 0.25, Condition::null());
  EXPECT_LT(testing::max_abs_diff(got_null, testing::naive_forward(p, x, 0.25, Condition::null())), 1e-12);
}

TEST(Mlp, BatchedEqualsPerRow) {
  const ModelParams p = random_params(testing::small_arch(), 2);
  Rng rng(4);
  const Matrix x = testing::random_matrix(5, 2, rng);
  const std::vector<double> t{0.1, 0.3, 0.5, 0.7, 0.9};
  const std::vector<Condition> c{Condition(0), Condition(1), Condition::null(), Condition(2), Condition(0)};
  const Matrix out = nn::mlp_forward(p, x, t, c);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const auto row = nn::mlp_forward(p, std::vector<double>{x(i, 0), x(i, 1)}, t[i], c[i]);
    EXPECT_EQ(out(i, 0), row[0]);
    EXPECT_EQ(out(i, 1), row[1]);
  }
}

TEST(Mlp, RejectsWrongInputWidth) {
  const ModelParams p = ModelParams::zeros(testing::small_arch());
  EXPECT_THROW(nn::mlp_forward(p, std::vector<double>{1.0, 2.0, 3.0}, 0.5, Condition(0)), InputError);
}

// ---------------------------------------------------------------- autodiff

TEST(Autodiff, HalfSquaredNormGradientIsParams) {
  const ModelParams p = random_params(testing::small_arch(), 8);
  const auto vg = nn::value_and_grad(
      [](Tape& t, Var th) { return t.scale(t.sum(t.square(th)), 0.5); }, p);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_DOUBLE_EQ(vg.grad.values[i], p.values[i]);
}

TEST(Autodiff, ConstantLossHasZeroGradient) {
  const ModelParams p = random_params(testing::small_arch(), 8);
  const auto vg = nn::value_and_grad([](Tape& t, Var) { return t.constant_scalar(3.5); }, p);
  EXPECT_EQ(vg.value, 3.5);
  for (double g : vg.grad.values) EXPECT_EQ(g, 0.0);
}

TEST(Autodiff, MlpMseMatchesFiniteDifferences) {
  const nn::MlpArch arch = testing::small_arch();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelParams p = random_params(arch, seed);
    Rng rng(100 + seed);
    const Matrix x = testing::random_matrix(1, 2, rng);
    const Matrix y = testing::random_matrix(1, 2, rng);
    const std::vector<double> t{rng.uniform(0.05, 1.0)};
    const std::vector<Condition> c{Condition(static_cast<int>(seed % 3))};
    auto loss = [&](Tape& tape, Var th) {
      return tape.sum(tape.row_sq_norm(tape.sub(nn::mlp_forward(tape, arch, th, x, t, c), tape.constant(y))));
    };
    const auto rep = nn::finite_diff_check(loss, p, 1e-4, 1e-4);
    EXPECT_TRUE(rep.passed) << "seed " << seed << " err " << rep.max_rel_error;
  }
}

TEST(Autodiff, EveryPrimitiveMatchesFiniteDifferences) {
  // One loss that routes through each tape primitive.
  nn::MlpArch arch;
  arch.hidden = {};
  arch.data_dim = 1;
  arch.output_dim = 12;
  arch.time_dim = 0;
  arch.cond_rows = 0;
  const ModelParams p = random_params(arch, 21, 0.7);  // 12 + 12 values
  const std::vector<int> rows{2, 0, 1, 2};
  auto loss = [&](Tape& t, Var th) {
    Var a = t.slice(th, 0, 3, 4);
    Var b = t.slice(th, 12, 4, 3);
    Var m = t.matmul(a, b);                                   // 3x3
    Var r = t.add_row(m, t.slice(th, 12, 1, 3));              // 3x3
    Var s = t.add(t.silu(r), t.softplus(t.scale(r, -0.5)));
    Var e = t.exp(t.clamp(s, -2.0, 2.0));
    Var q = t.sub(t.square(e), t.add_scalar(r, 0.3));
    Var mn = t.minimum(q, t.mul(r, r));
    Var g = t.gather_rows(mn, rows);                          // 4x3
    Var c = t.concat_cols({g, t.slice(th, 0, 4, 1)});         // 4x4
    return t.add(t.mean(t.row_sq_norm(c)), t.sum(c));
  };
  const auto rep = nn::finite_diff_check(loss, p, 1e-5, 1e-4);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " at " << rep.worst_index;
}

TEST(Autodiff, NonFiniteValueNamesPrimitive) {
  ModelParams p = ModelParams::zeros(testing::small_arch());
  p.values[0] = 1000.0;
  try {
    nn::value_and_grad([](Tape& t, Var th) { return t.sum(t.exp(th)); }, p);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("exp"), std::string::npos) << e.what();
  }
}

TEST(Autodiff, ShapeMismatchIsRejected) {
  Tape t;
  Var a = t.leaf(Matrix::Ones(2, 3));
  Var b = t.leaf(Matrix::Ones(2, 3));
  EXPECT_THROW(t.matmul(a, b), InputError);
  EXPECT_THROW(t.add(a, t.leaf(Matrix::Ones(3, 2))), InputError);
}

// ---------------------------------------------------------------- finite_diff_check

TEST(FiniteDiff, QuadraticIsNearExact) {
  const ModelParams p = random_params(testing::small_arch(), 1);
  const auto rep = nn::finite_diff_check([](Tape& t, Var th) { return t.sum(t.square(th)); }, p, 1e-4, 1e-8);
  EXPECT_LE(rep.max_rel_error, 1e-8);
  EXPECT_TRUE(rep.passed);
}

TEST(FiniteDiff, CorruptedEntryIsFlagged) {
  const ModelParams p = random_params(testing::small_arch(), 1);
  nn::LossFn loss = [](Tape& t, Var th) { return t.sum(t.square(th)); };
  nn::GradVector g = nn::value_and_grad(loss, p).grad;
  g.values[17] *= 2.0;
  const auto rep = nn::finite_diff_check(loss, p, g, 1e-4, 1e-4);
  EXPECT_FALSE(rep.passed);
  EXPECT_EQ(rep.worst_index, 17u);
}

// ---------------------------------------------------------------- optimizer

TEST(Optim, SgdStepArithmetic) {
  nn::MlpArch arch;
  arch.hidden = {};
  arch.data_dim = 1;
  arch.output_dim = 0;
  arch.time_dim = 0;
  arch.cond_rows = 0;
  ModelParams p{arch, {1.0}};
  auto st = nn::OptimizerState::sgd(0.1, 1);
  nn::adam_step(st, p, nn::GradVector{{2.0}});
  EXPECT_DOUBLE_EQ(p.values[0], 0.8);
}

TEST(Optim, ZeroGradientLeavesParamsAndDecaysMoments) {
  ModelParams p = random_params(testing::small_arch(), 3);
  const ModelParams before = p;
  const nn::GradVector zero{std::vector<double>(p.size(), 0.0)};
  auto adam = nn::OptimizerState::adam(1e-3, p.size());
  nn::adam_step(adam, p, zero);
  EXPECT_EQ(p.values, before.values);

  auto sgd = nn::OptimizerState::sgd(0.1, p.size());
  std::fill(sgd.m.begin(), sgd.m.end(), 1.0);
  std::fill(sgd.v.begin(), sgd.v.end(), 1.0);
  nn::adam_step(sgd, p, zero);
  EXPECT_EQ(p.values, before.values);
  EXPECT_DOUBLE_EQ(sgd.m[0], 0.9);
  EXPECT_DOUBLE_EQ(sgd.v[0], 0.999);
}

TEST(Optim, SgdConvergesOnQuadraticGeometrically) {
  nn::MlpArch arch;
  arch.hidden = {};
  arch.data_dim = 1;
  arch.output_dim = 0;
  arch.time_dim = 0;
  arch.cond_rows = 0;
  ModelParams p{arch, {0.0}};
  auto st = nn::OptimizerState::sgd(0.1, 1);
  for (int i = 0; i < 100; ++i) nn::adam_step(st, p, nn::GradVector{{2.0 * (p.values[0] - 3.0)}});
  // p_k - 3 = -3 * 0.8^k
  EXPECT_NEAR(p.values[0], 3.0, 1e-6);
  EXPECT_NEAR(p.values[0] - 3.0, -3.0 * std::pow(0.8, 100), 1e-12);
}

TEST(Optim, AdamFirstStepIsLearningRateTimesSign) {
  ModelParams p = random_params(testing::small_arch(), 5);
  const ModelParams before = p;
  Rng rng(6);
  nn::GradVector g{testing::random_vector(p.size(), rng)};
  auto st = nn::OptimizerState::adam(1e-3, p.size());
  nn::adam_step(st, p, g);
  for (std::size_t i = 0; i < p.size(); ++i) {
    // bias-corrected m/sqrt(v) = g/|g| up to eps
    const double want = -1e-3 * g.values[i] / (std::abs(g.values[i]) + 1e-8);
    EXPECT_NEAR(p.values[i] - before.values[i], want, 1e-12);
  }
}

TEST(Optim, NonFiniteGradientIsRejected) {
  ModelParams p = random_params(testing::small_arch(), 5);
  auto st = nn::OptimizerState::adam(1e-3, p.size());
  nn::GradVector g{std::vector<double>(p.size(), 0.0)};
  g.values[2] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(nn::adam_step(st, p, g), NumericError);
}

TEST(Ema, EndpointsAndAffinity) {
  const nn::MlpArch arch = testing::small_arch();
  const ModelParams a = random_params(arch, 1), b = random_params(arch, 2);
  const ModelParams c = random_params(arch, 3), d = random_params(arch, 4);
  EXPECT_EQ(nn::ema_update(a, b, 0.0).values, b.values);
  EXPECT_EQ(nn::ema_update(a, b, 1.0).values, a.values);
  ModelParams ac = a, bd = b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ac.values[i] += c.values[i];
    bd.values[i] += d.values[i];
  }
  const auto lhs1 = nn::ema_update(a, b, 0.3), lhs2 = nn::ema_update(c, d, 0.3);
  const auto rhs = nn::ema_update(ac, bd, 0.3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(lhs1.values[i] + lhs2.values[i], rhs.values[i], 1e-14);
  EXPECT_THROW(nn::ema_update(a, b, 1.5), InputError);
}

// ---------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripIsBitExact) {
  const ModelParams p = random_params(nn::MlpArch{}, 77, 1.0 / 3.0);
  Rng rng(5);
  rng.normal();
  const auto path = std::filesystem::temp_directory_path() / "dgpo_ckpt_roundtrip.ckpt";
  nn::save_checkpoint({p, rng.state()}, path);
  const nn::Checkpoint back = nn::load_checkpoint(path);
  EXPECT_TRUE(back.params.arch == p.arch);
  ASSERT_EQ(back.params.values.size(), p.values.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    ASSERT_EQ(std::bit_cast<std::uint64_t>(back.params.values[i]), std::bit_cast<std::uint64_t>(p.values[i]));
  }
  EXPECT_EQ(back.rng_state, rng.state());
  std::filesystem::remove(path);
}

TEST(Checkpoint, MalformedFileIsRejected) {
  const auto path = std::filesystem::temp_directory_path() / "dgpo_ckpt_bad.ckpt";
  std::ofstream(path) << "{\"format\": \"something-else\"}";
  EXPECT_THROW(nn::load_checkpoint(path), InputError);
  std::ofstream(path) << "not json";
  EXPECT_THROW(nn::load_checkpoint(path), InputError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace dgpo
