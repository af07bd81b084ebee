#include "dgpo/schedule.hpp"

#include <algorithm>

#include "dgpo/errors.hpp"
#include "dgpo/mlp.hpp"

namespace dgpo::diffusion {

std::string to_string(Weighting w) { return w == Weighting::constant ? "constant" : "inverse_t"; }

Weighting weighting_from_string(const std::string& s) {
  if (s == "constant") return Weighting::constant;
  if (s == "inverse_t") return Weighting::inverse_t;
  throw InputError("unknown loss weighting '" + s + "'");
}

double Schedule::lambda(double t) const {
  switch (weighting) {
    case Weighting::constant:
      return 1.0;
    case Weighting::inverse_t:
      return 1.0 / std::max(t, t_floor);
  }
  return 1.0;
}

std::vector<double> forward_diffuse(std::span<const double> x, double t, std::span<const double> eps) {
  if (x.size() != eps.size()) throw InputError("forward_diffuse: x and eps differ in dimension");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (1.0 - t) * x[i] + t * eps[i];
  return out;
}

double denoising_loss(const nn::ModelParams& params, std::span<const double> x, double t,
                      std::span<const double> eps, nn::Condition cond) {
  const std::vector<double> xt = forward_diffuse(x, t, eps);
  const std::vector<double> xhat = nn::mlp_forward(params, xt, t, cond);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (xhat[i] - x[i]) * (xhat[i] - x[i]);
  return acc;
}

namespace {
void check_t(double t, double t_floor, const char* op) {
  if (!(t >= t_floor)) {
    throw InputError(std::string(op) + ": t=" + std::to_string(t) + " below floor " +
                     std::to_string(t_floor));
  }
}
}  // namespace

std::vector<double> x_to_velocity(std::span<const double> x_hat, std::span<const double> x_t,
                                  double t, double t_floor) {
  check_t(t, t_floor, "x_to_velocity");
  if (x_hat.size() != x_t.size()) throw InputError("x_to_velocity: dimension mismatch");
  std::vector<double> v(x_t.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (x_t[i] - x_hat[i]) / t;
  return v;
}

std::vector<double> score_from_xpred(std::span<const double> x_hat, std::span<const double> x_t,
                                     double t, double t_floor) {
  check_t(t, t_floor, "score_from_xpred");
  if (x_hat.size() != x_t.size()) throw InputError("score_from_xpred: dimension mismatch");
  std::vector<double> s(x_t.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = ((1.0 - t) * x_hat[i] - x_t[i]) / (t * t);
  return s;
}

}  // namespace dgpo::diffusion
