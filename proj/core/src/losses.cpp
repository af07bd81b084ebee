#include "dgpo/losses.hpp"

#include <cmath>
#include <memory>
#include <numbers>

#include "dgpo/errors.hpp"
#include "dgpo/mlp.hpp"

namespace dgpo::pref {
namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Matrix noised(const Matrix& x0, const DiffusionDraw& draw) {
  if (static_cast<std::size_t>(x0.cols()) != draw.eps.size()) {
    throw InputError("noise draw dimension does not match samples");
  }
  const Eigen::Map<const Matrix> eps(draw.eps.data(), 1, x0.cols());
  Matrix xt(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) xt.row(i) = (1.0 - draw.t) * x0.row(i) + draw.t * eps;
  return xt;
}

Matrix column(std::span<const double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

void check_draw(const DiffusionDraw& draw) {
  if (!(draw.t > 0.0 && draw.t <= 1.0)) throw InputError("diffusion time must lie in (0, 1]");
}

}  // namespace

nn::Var denoising_losses(nn::Tape& tape, const nn::MlpArch& arch, nn::Var theta, const Matrix& x0,
                         Condition cond, const DiffusionDraw& draw) {
  check_draw(draw);
  const Matrix xt = noised(x0, draw);
  const std::vector<double> ts(static_cast<std::size_t>(x0.rows()), draw.t);
  const std::vector<Condition> cs(arch.uses_condition() ? ts.size() : 0, cond);
  nn::Var xhat = nn::mlp_forward(tape, arch, theta, xt, arch.time_dim > 0 ? std::span<const double>(ts)
                                                                          : std::span<const double>{},
                                 cs);
  return tape.row_sq_norm(tape.sub(xhat, tape.constant(x0)));
}

std::vector<double> denoising_losses(const nn::ModelParams& params, const Matrix& x0, Condition cond,
                                     const DiffusionDraw& draw) {
  nn::Tape tape;
  nn::Var theta = tape.constant(nn::as_column(params.values));
  const Matrix& l = tape.value(denoising_losses(tape, params.arch, theta, x0, cond, draw));
  return {l.data(), l.data() + l.size()};
}

double dgpo_argument_grouped(std::span<const double> diffs, const Group& group, double beta,
                             double lambda_t) {
  if (diffs.size() != group.size()) throw InputError("dgpo: one diff per group member required");
  double pos = 0.0;
  double neg = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    if (group.positive[i]) {
      pos += group.weights[i] * diffs[i];
    } else {
      neg += group.weights[i] * diffs[i];
    }
  }
  return -lambda_t * beta * (pos - neg);
}

double dgpo_argument_compact(std::span<const double> diffs, std::span<const double> advantages,
                             double beta, double lambda_t) {
  if (diffs.size() != advantages.size()) throw InputError("dgpo: one diff per advantage required");
  double acc = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i) acc += advantages[i] * diffs[i];
  return -lambda_t * beta * acc;
}

double dgpo_loss_from_diffs(std::span<const double> diffs, const Group& group, double beta,
                            double lambda_t) {
  return softplus(-dgpo_argument_grouped(diffs, group, beta, lambda_t));
}

nn::Var dgpo_loss_var(nn::Tape& tape, const nn::MlpArch& arch, nn::Var theta, const Group& group,
                      const DiffusionDraw& draw, std::span<const double> ref_losses, double beta,
                      double lambda_t) {
  if (group.degenerate) throw InputError("dgpo: degenerate group (all rewards equal)");
  if (ref_losses.size() != group.size()) throw InputError("dgpo: one reference loss per member required");
  nn::Var loss = denoising_losses(tape, arch, theta, group.samples, group.cond, draw);
  nn::Var diffs = tape.sub(loss, tape.constant(column(ref_losses)));
  // softplus(-z) with -z = λβ Σ s_i d_i
  nn::Var weighted = tape.sum(tape.mul(diffs, tape.constant(column(group.signed_weights()))));
  return tape.softplus(tape.scale(weighted, lambda_t * beta));
}

nn::LossFn dgpo_loss_fn(const nn::ModelParams& theta_ref, const Group& group, const DiffusionDraw& draw,
                        double beta, double lambda_t) {
  if (group.degenerate) throw InputError("dgpo: degenerate group (all rewards equal)");
  auto ref = std::make_shared<std::vector<double>>(denoising_losses(theta_ref, group.samples, group.cond, draw));
  auto g = std::make_shared<Group>(group);
  const nn::MlpArch arch = theta_ref.arch;
  return [arch, ref, g, draw, beta, lambda_t](nn::Tape& tape, nn::Var theta) {
    return dgpo_loss_var(tape, arch, theta, *g, draw, *ref, beta, lambda_t);
  };
}

nn::ValueAndGrad dgpo_loss(const nn::ModelParams& theta, const nn::ModelParams& theta_ref,
                           const Group& group, const DiffusionDraw& draw, double beta, double lambda_t) {
  if (!(theta.arch == theta_ref.arch)) throw InputError("dgpo: θ and θ_ref architectures differ");
  return nn::value_and_grad(dgpo_loss_fn(theta_ref, group, draw, beta, lambda_t), theta);
}

double dpo_loss_from_diffs(double d_winner, double d_loser, double beta) {
  return softplus(beta * (d_winner - d_loser));
}

nn::Var dpo_loss_var(nn::Tape& tape, const nn::MlpArch& arch, nn::Var theta, const Matrix& pair,
                     Condition cond, const DiffusionDraw& draw, std::span<const double> ref_losses,
                     double beta) {
  if (pair.rows() != 2 || ref_losses.size() != 2) throw InputError("dpo: expects a (winner, loser) pair");
  nn::Var loss = denoising_losses(tape, arch, theta, pair, cond, draw);
  nn::Var diffs = tape.sub(loss, tape.constant(column(ref_losses)));
  Matrix sign(2, 1);
  sign << 1.0, -1.0;
  nn::Var delta = tape.sum(tape.mul(diffs, tape.constant(sign)));
  return tape.softplus(tape.scale(delta, beta));
}

namespace {
Matrix stack_pair(std::span<const double> x_w, std::span<const double> x_l) {
  if (x_w.size() != x_l.size()) throw InputError("dpo: winner and loser differ in dimension");
  Matrix m(2, static_cast<Eigen::Index>(x_w.size()));
  for (std::size_t j = 0; j < x_w.size(); ++j) {
    m(0, j) = x_w[j];
    m(1, j) = x_l[j];
  }
  return m;
}
}  // namespace

nn::LossFn dpo_loss_fn(const nn::ModelParams& theta_ref, std::span<const double> x_w,
                       std::span<const double> x_l, Condition cond, const DiffusionDraw& draw,
                       double beta) {
  auto pair = std::make_shared<Matrix>(stack_pair(x_w, x_l));
  auto ref = std::make_shared<std::vector<double>>(denoising_losses(theta_ref, *pair, cond, draw));
  const nn::MlpArch arch = theta_ref.arch;
  return [arch, pair, ref, cond, draw, beta](nn::Tape& tape, nn::Var theta) {
    return dpo_loss_var(tape, arch, theta, *pair, cond, draw, *ref, beta);
  };
}

nn::ValueAndGrad dpo_loss(const nn::ModelParams& theta, const nn::ModelParams& theta_ref,
                          std::span<const double> x_w, std::span<const double> x_l, Condition cond,
                          const DiffusionDraw& draw, double beta) {
  if (!(theta.arch == theta_ref.arch)) throw InputError("dpo: θ and θ_ref architectures differ");
  return nn::value_and_grad(dpo_loss_fn(theta_ref, x_w, x_l, cond, draw, beta), theta);
}

double gaussian_logprob(std::span<const double> x, std::span<const double> mean, double variance) {
  if (!(variance > 0.0)) throw InputError("gaussian_logprob: variance must be positive");
  if (x.size() != mean.size()) throw InputError("gaussian_logprob: dimension mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - mean[i]) * (x[i] - mean[i]);
  const double dim = static_cast<double>(x.size());
  return -sq / (2.0 * variance) - 0.5 * dim * std::log(2.0 * std::numbers::pi * variance);
}

double GrpoStepRecord::ratio() const { return std::exp(logp_new - logp_old); }

nn::Var grpo_loss_var(nn::Tape& tape, const nn::MlpArch& arch, nn::Var theta,
                      std::span<const ScoredTrajectory> items, double noise_scale, double clip) {
  if (!(clip >= 0.0)) throw InputError("grpo: clip range must be non-negative");
  std::size_t rows = 0;
  for (const ScoredTrajectory& it : items) {
    if (it.trajectory == nullptr || it.trajectory->steps.empty()) throw InputError("grpo: empty trajectory");
    rows += it.trajectory->steps.size();
  }
  const auto d = static_cast<Eigen::Index>(arch.data_dim);
  const auto R = static_cast<Eigen::Index>(rows);
  Matrix x(R, d), x_next(R, d), c_x(R, d), c_hat(R, d);
  Matrix inv_two_var(R, 1), log_norm(R, 1), logp_old(R, 1), adv(R, 1), row_weight(R, 1);
  std::vector<double> ts(rows);
  std::vector<Condition> cs(arch.uses_condition() ? rows : 0);
  Eigen::Index r = 0;
  for (const ScoredTrajectory& it : items) {
    const double w = 1.0 / static_cast<double>(it.trajectory->steps.size());
    for (const diffusion::TransitionRecord& s : it.trajectory->steps) {
      if (!(s.variance > 0.0)) throw InputError("grpo: transition record has zero variance (needs a > 0)");
      const diffusion::MeanCoefficients k = diffusion::transition_coefficients(s.t, s.dt, noise_scale);
      for (Eigen::Index j = 0; j < d; ++j) {
        x(r, j) = s.x[j];
        x_next(r, j) = s.x_next[j];
        c_x(r, j) = k.c_x;
        c_hat(r, j) = k.c_hat;
      }
      inv_two_var(r, 0) = -1.0 / (2.0 * s.variance);
      log_norm(r, 0) = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * s.variance);
      logp_old(r, 0) = gaussian_logprob(s.x_next, s.mean, s.variance);
      adv(r, 0) = it.advantage;
      row_weight(r, 0) = -w;
      ts[r] = s.t;
      if (!cs.empty()) cs[r] = it.cond;
      ++r;
    }
  }
  nn::Var xhat = nn::mlp_forward(tape, arch, theta, x, arch.time_dim > 0 ? std::span<const double>(ts)
                                                                         : std::span<const double>{},
                                 cs);
  Matrix cx_x = c_x.cwiseProduct(x);
  nn::Var mean = tape.add(tape.constant(std::move(cx_x)), tape.mul(tape.constant(c_hat), xhat));
  nn::Var sq = tape.row_sq_norm(tape.sub(tape.constant(x_next), mean));
  nn::Var logp = tape.add(tape.mul(sq, tape.constant(inv_two_var)), tape.constant(log_norm));
  nn::Var ratio = tape.exp(tape.sub(logp, tape.constant(logp_old)));
  nn::Var advv = tape.constant(adv);
  nn::Var unclipped = tape.mul(ratio, advv);
  nn::Var clipped = tape.mul(tape.clamp(ratio, 1.0 - clip, 1.0 + clip), advv);
  nn::Var objective = tape.minimum(unclipped, clipped);
  return tape.sum(tape.mul(objective, tape.constant(row_weight)));
}

nn::LossFn grpo_loss_fn(const nn::MlpArch& arch, std::vector<ScoredTrajectory> items,
                        double noise_scale, double clip) {
  auto shared = std::make_shared<std::vector<ScoredTrajectory>>(std::move(items));
  return [arch, shared, noise_scale, clip](nn::Tape& tape, nn::Var theta) {
    return grpo_loss_var(tape, arch, theta, *shared, noise_scale, clip);
  };
}

GrpoLoss grpo_loss(const nn::ModelParams& theta, const diffusion::RolloutTrajectory& trajectory,
                   Condition cond, double advantage, double noise_scale, double clip) {
  std::vector<ScoredTrajectory> items{{&trajectory, cond, advantage}};
  nn::ValueAndGrad vg = nn::value_and_grad(grpo_loss_fn(theta.arch, items, noise_scale, clip), theta);
  GrpoLoss out{vg.value, std::move(vg.grad), {}};
  for (const diffusion::TransitionRecord& s : trajectory.steps) {
    const diffusion::MeanCoefficients k = diffusion::transition_coefficients(s.t, s.dt, noise_scale);
    const std::vector<double> xhat = nn::mlp_forward(theta, s.x, s.t, cond);
    std::vector<double> mean(s.x.size());
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] = k.c_x * s.x[j] + k.c_hat * xhat[j];
    out.steps.push_back({gaussian_logprob(s.x_next, mean, s.variance),
                         gaussian_logprob(s.x_next, s.mean, s.variance), advantage, clip});
  }
  return out;
}

}  // namespace dgpo::pref
