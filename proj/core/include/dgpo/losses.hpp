#pragma once

#include <span>
#include <vector>

#include "dgpo/autodiff.hpp"
#include "dgpo/group.hpp"
#include "dgpo/sampler.hpp"

namespace dgpo::pref {

/// Noise draw shared by every member of a group.
struct DiffusionDraw {
  double t = 0.5;
  std::vector<double> eps;
};

/// Per-row ||f(x_t, t, c) - x||² for a batch of clean samples sharing (t, ε).
std::vector<double> denoising_losses(const nn::ModelParams& params, const Matrix& x0, Condition cond,
                                     const DiffusionDraw& draw);

/// Taped version of denoising_losses: G x 1 column.
nn::Var denoising_losses(nn::Tape& tape, const nn::MlpArch& arch, nn::Var theta, const Matrix& x0,
                         Condition cond, const DiffusionDraw& draw);

// Group objective -------------------------------------------------------------

/// z = -λβ (Σ_{G⁺} w_i d_i - Σ_{G⁻} w_i d_i).
double dgpo_argument_grouped(std::span<const double> diffs, const Group& group, double beta,
                             double lambda_t);
/// z = -λβ Σ_i A_i d_i; equal to the grouped form.
double dgpo_argument_compact(std::span<const double> diffs, std::span<const double> advantages,
                             double beta, double lambda_t);
/// -log σ(z) from precomputed diffs d_i = L^θ - L^ref.
double dgpo_loss_from_diffs(std::span<const double> diffs, const Group& group, double beta,
                            double lambda_t);

/// Taped group loss given the frozen reference losses.
nn::Var dgpo_loss_var(nn::Tape& tape, const nn::MlpArch& arch, nn::Var theta, const Group& group,
                      const DiffusionDraw& draw, std::span<const double> ref_losses, double beta,
                      double lambda_t);

/// Differentiable closure over θ with θ_ref frozen. Rejects degenerate groups.
nn::LossFn dgpo_loss_fn(const nn::ModelParams& theta_ref, const Group& group, const DiffusionDraw& draw,
                        double beta, double lambda_t);

nn::ValueAndGrad dgpo_loss(const nn::ModelParams& theta, const nn::ModelParams& theta_ref,
                           const Group& group, const DiffusionDraw& draw, double beta, double lambda_t);

// Pairwise baseline -----------------------------------------------------------

/// -log σ(-β (d_w - d_l)).
double dpo_loss_from_diffs(double d_winner, double d_loser, double beta);

nn::Var dpo_loss_var(nn::Tape& tape, const nn::MlpArch& arch, nn::Var theta, const Matrix& pair,
                     Condition cond, const DiffusionDraw& draw, std::span<const double> ref_losses,
                     double beta);

nn::LossFn dpo_loss_fn(const nn::ModelParams& theta_ref, std::span<const double> x_w,
                       std::span<const double> x_l, Condition cond, const DiffusionDraw& draw,
                       double beta);

nn::ValueAndGrad dpo_loss(const nn::ModelParams& theta, const nn::ModelParams& theta_ref,
                          std::span<const double> x_w, std::span<const double> x_l, Condition cond,
                          const DiffusionDraw& draw, double beta);

// Policy-gradient baseline ----------------------------------------------------

/// log N(x; mean, variance·I). Rejects variance <= 0.
double gaussian_logprob(std::span<const double> x, std::span<const double> mean, double variance);

struct GrpoStepRecord {
  double logp_new = 0.0;
  double logp_old = 0.0;
  double advantage = 0.0;
  double clip = 0.2;
  double ratio() const;
};

/// One trajectory scored for the clipped surrogate.
struct ScoredTrajectory {
  const diffusion::RolloutTrajectory* trajectory = nullptr;
  Condition cond;
  double advantage = 0.0;
};

/// Σ over trajectories of -mean_k min(ρ_k A, clip(ρ_k, 1 - ε, 1 + ε) A),
/// with ρ_k = p_θ / p_old of the recorded transition.
nn::Var grpo_loss_var(nn::Tape& tape, const nn::MlpArch& arch, nn::Var theta,
                      std::span<const ScoredTrajectory> items, double noise_scale, double clip);

nn::LossFn grpo_loss_fn(const nn::MlpArch& arch, std::vector<ScoredTrajectory> items,
                        double noise_scale, double clip);

struct GrpoLoss {
  double value = 0.0;
  nn::GradVector grad;
  std::vector<GrpoStepRecord> steps;
};

/// Single-trajectory loss; the old-policy densities come from the record.
GrpoLoss grpo_loss(const nn::ModelParams& theta, const diffusion::RolloutTrajectory& trajectory,
                   Condition cond, double advantage, double noise_scale, double clip);

}  // namespace dgpo::pref
