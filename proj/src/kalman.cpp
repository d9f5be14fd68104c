#include "smc2fw/kalman.hpp"

#include <cmath>
#include <numbers>

namespace smc2fw {

KalmanState kalman_init(const LinearGaussianParams& params) {
  params.validate();
  KalmanState s;
  s.variance = 1.0 / params.tau0;
  return s;
}

KalmanState kalman_step(const KalmanState& state, const LinearGaussianParams& params,
                        double y) {
  const double pred_var = state.variance + 1.0 / params.tau;
  const double obs_var = 1.0 / params.lambda;
  const double s = pred_var + obs_var;
  const double innov = y - state.mean;
  const double inc = -0.5 * (std::log(2.0 * std::numbers::pi * s) + innov * innov / s);

  KalmanState next;
  const double gain = pred_var / s;
  next.mean = state.mean + gain * innov;
  // pred_var * obs_var / s is the symmetric form; it stays positive when
  // one of the variances is tiny.
  next.variance = pred_var * obs_var / s;
  next.step = state.step + 1;
  next.last_increment = inc;
  next.cum_loglik = state.cum_loglik + inc;
  return next;
}

double kalman_loglik(const LinearGaussianParams& params, std::span<const double> y) {
  KalmanState s = kalman_init(params);
  for (double v : y) s = kalman_step(s, params, v);
  return s.cum_loglik;
}

KalmanPath kalman_filter(const LinearGaussianParams& params, std::span<const double> y) {
  KalmanPath out;
  out.mean.reserve(y.size());
  out.variance.reserve(y.size());
  out.increments.reserve(y.size());
  KalmanState s = kalman_init(params);
  for (double v : y) {
    s = kalman_step(s, params, v);
    out.mean.push_back(s.mean);
    out.variance.push_back(s.variance);
    out.increments.push_back(s.last_increment);
  }
  return out;
}

}  // namespace smc2fw
