#pragma once

#include <span>
#include <string>
#include <vector>

#include "dgpo/params.hpp"

namespace dgpo::diffusion {

inline constexpr double kDefaultTFloor = 1e-3;

/// Loss weighting λ(t); positive on (0, 1].
enum class Weighting { constant, inverse_t };

std::string to_string(Weighting w);
Weighting weighting_from_string(const std::string& s);

/// Rectified-flow path x_t = (1 - t) x + t ε.
struct Schedule {
  Weighting weighting = Weighting::constant;
  double t_floor = kDefaultTFloor;

  static double alpha(double t) { return 1.0 - t; }
  static double sigma(double t) { return t; }
  double lambda(double t) const;
};

std::vector<double> forward_diffuse(std::span<const double> x, double t, std::span<const double> eps);

/// ||f(x_t, t, c) - x||² with x_t = forward_diffuse(x, t, eps). No λ factor.
double denoising_loss(const nn::ModelParams& params, std::span<const double> x, double t,
                      std::span<const double> eps, nn::Condition cond);

/// (x_t - x̂) / t. Rejects t below `t_floor`.
std::vector<double> x_to_velocity(std::span<const double> x_hat, std::span<const double> x_t,
                                  double t, double t_floor = kDefaultTFloor);

/// ((1 - t) x̂ - x_t) / t², the score of N((1 - t) x̂, t² I) at x_t.
std::vector<double> score_from_xpred(std::span<const double> x_hat, std::span<const double> x_t,
                                     double t, double t_floor = kDefaultTFloor);

}  // namespace dgpo::diffusion
