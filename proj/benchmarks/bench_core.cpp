#include <benchmark/benchmark.h>

#include <vector>

#include "dgpo/autodiff.hpp"
#include "dgpo/losses.hpp"
#include "dgpo/metrics.hpp"
#include "dgpo/mlp.hpp"
#include "dgpo/rng.hpp"
#include "dgpo/sampler.hpp"
#include "dgpo/trainers.hpp"

namespace {

using namespace dgpo;
using nn::Condition;
using nn::Matrix;

nn::ModelParams default_params() {
  const train::TrainConfig c;
  return nn::init_params(c.arch(), 1);
}

Matrix noise(Eigen::Index rows, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, 2);
  for (Eigen::Index i = 0; i < rows; ++i) m.row(i) << rng.normal(), rng.normal();
  return m;
}

void BM_MlpForward(benchmark::State& state) {
  const auto p = default_params();
  const auto n = state.range(0);
  const Matrix x = noise(n, 2);
  const std::vector<double> t(static_cast<std::size_t>(n), 0.5);
  const std::vector<Condition> c(static_cast<std::size_t>(n), Condition(3));
  const diffusion::Denoiser f = diffusion::model_denoiser(p);
  for (auto _ : state) benchmark::DoNotOptimize(f(x, t, c));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(8)->Arg(128)->Arg(512);

void BM_DenoisingLossGradient(benchmark::State& state) {
  const auto p = default_params();
  const Matrix x = noise(state.range(0), 3);
  const pref::DiffusionDraw d{0.5, {0.3, -0.2}};
  const nn::LossFn fn = [&](nn::Tape& t, nn::Var th) {
    return t.sum(pref::denoising_losses(t, p.arch, th, x, Condition(2), d));
  };
  for (auto _ : state) benchmark::DoNotOptimize(nn::value_and_grad(fn, p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DenoisingLossGradient)->Arg(8)->Arg(128);

void BM_DgpoLossGradient(benchmark::State& state) {
  const auto p = default_params();
  const auto g = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::vector<double> r(g);
  for (double& v : r) v = rng.uniform();
  const pref::Group group = pref::make_group(Condition(1), Condition(1), noise(state.range(0), 5), r);
  const nn::LossFn fn = pref::dgpo_loss_fn(p, group, {0.6, {0.1, 0.4}}, 100.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(nn::value_and_grad(fn, p));
}
BENCHMARK(BM_DgpoLossGradient)->Arg(8)->Arg(24);

void BM_OdeRollout(benchmark::State& state) {
  const auto p = default_params();
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::vector<Condition> c(n, Condition(0));
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = i;
  const diffusion::Denoiser f = diffusion::model_denoiser(p);
  for (auto _ : state) benchmark::DoNotOptimize(diffusion::sample_ode(f, c, seeds, 10, 2));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_OdeRollout)->Arg(8)->Arg(512);

void BM_SdeRollout(benchmark::State& state) {
  const auto p = default_params();
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::vector<Condition> c(n, Condition(0));
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = i;
  const diffusion::Denoiser f = diffusion::model_denoiser(p);
  for (auto _ : state) benchmark::DoNotOptimize(diffusion::sample_sde(f, c, seeds, 10, 0.7, 2));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SdeRollout)->Arg(8)->Arg(512);

void BM_SlicedW2(benchmark::State& state) {
  const Matrix a = noise(512, 6), b = noise(2048, 7);
  for (auto _ : state) benchmark::DoNotOptimize(train::sliced_w2(a, b, static_cast<int>(state.range(0)), 0));
}
BENCHMARK(BM_SlicedW2)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
