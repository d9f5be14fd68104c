#pragma once

#include <cstddef>
#include <span>

#include "smc2fw/models.hpp"

namespace smc2fw {

// Scalar Kalman filter for the Gaussian random walk + noise model.
struct KalmanState {
  double mean = 0.0;      // E[x_k | y_1..k]
  double variance = 1.0;  // Var[x_k | y_1..k]
  std::size_t step = 0;
  double cum_loglik = 0.0;
  double last_increment = 0.0;  // log p(y_k | y_1..k-1) of the latest step
};

KalmanState kalman_init(const LinearGaussianParams& params);
KalmanState kalman_step(const KalmanState& state, const LinearGaussianParams& params,
                        double y);
double kalman_loglik(const LinearGaussianParams& params, std::span<const double> y);

// Filtered means/variances for every step of y (index k-1 holds step k).
struct KalmanPath {
  Vec mean;
  Vec variance;
  Vec increments;
};
KalmanPath kalman_filter(const LinearGaussianParams& params, std::span<const double> y);

}  // namespace smc2fw
