#include "smc2fw/kde.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "smc2fw/errors.hpp"

namespace smc2fw {

void KdeBridge::validate() const {
  if (n == 0) throw std::invalid_argument("bridge support is empty");
  if (!(h > 0.0) || !std::isfinite(h)) throw ParameterDomainError("bandwidth must be positive");
  if (u.size() != n * dim_theta || x.size() != n * dim_state) {
    throw std::invalid_argument("bridge support has inconsistent sizes");
  }
  for (double v : u) {
    if (!std::isfinite(v)) throw std::invalid_argument("bridge theta is not finite");
  }
}

double bandwidth_rule_a3(std::size_t n, std::size_t d) {
  if (n == 0 || d == 0) throw std::invalid_argument("bandwidth rule needs n, d >= 1");
  return std::pow(static_cast<double>(n), -1.0 / (2.0 * (static_cast<double>(d) + 1.0)));
}

KdeDraw kde_sample_theta(const KdeBridge& bridge, Engine& eng) {
  std::uniform_int_distribution<std::size_t> pick(0, bridge.n - 1);
  KdeDraw d;
  d.index = pick(eng);
  const auto c = bridge.support_u(d.index);
  d.u.resize(bridge.dim_theta);
  const double sd = bridge.sd();
  for (std::size_t k = 0; k < bridge.dim_theta; ++k) {
    d.u[k] = c[k] + sd * standard_normal(eng);
  }
  return d;
}

Vec kde_kernel_logterms(const KdeBridge& bridge, std::span<const double> u) {
  const std::size_t d = bridge.dim_theta;
  // Covariance h * I.
  const double norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * bridge.h);
  const double inv_h = 1.0 / bridge.h;
  Vec out(bridge.n);
  for (std::size_t j = 0; j < bridge.n; ++j) {
    const double* c = bridge.u.data() + j * d;
    double q = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double z = u[k] - c[k];
      q += z * z;
    }
    out[j] = norm - 0.5 * q * inv_h;
  }
  return out;
}

double kde_marginal_logdensity(const KdeBridge& bridge, std::span<const double> u) {
  return log_mean_exp(kde_kernel_logterms(bridge, u));
}

void bridge_sample_state(const KdeBridge& bridge, std::span<const double> theta,
                         const StateSpaceModel& model, std::span<double> x_out,
                         Engine& eng) {
  std::uniform_int_distribution<std::size_t> pick(0, bridge.n - 1);
  model.transition_sample(theta, bridge.support_x(pick(eng)), x_out, eng);
}

Vec bridge_sample_states(const KdeBridge& bridge, std::span<const double> theta,
                         std::span<const double> u, const StateSpaceModel& model,
                         std::size_t n_x, BridgeCoupling coupling, Engine& eng) {
  Indices src(n_x);
  if (coupling == BridgeCoupling::conditional) {
    src = resample_multinomial(Weights::from_log(kde_kernel_logterms(bridge, u)), n_x, eng);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, bridge.n - 1);
    for (auto& j : src) j = pick(eng);
  }
  Vec out(n_x * bridge.dim_state);
  model.transition_batch(theta, bridge.x, src, out, eng);
  count_transition_draws(n_x);
  return out;
}

}  // namespace smc2fw
