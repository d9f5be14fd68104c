#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "smc2fw/models.hpp"
#include "smc2fw/particle.hpp"
#include "smc2fw/random.hpp"

namespace smc2fw {

// End-of-block sample (u^j, xbar^j), j = 0..n-1, with u = log(theta),
// smoothed by a Gaussian kernel with covariance h * I (sd sqrt(h)).
struct KdeBridge {
  std::size_t n = 0;
  std::size_t dim_theta = 0;
  std::size_t dim_state = 0;
  Vec u;  // n * dim_theta
  Vec x;  // n * dim_state
  double h = 0.01;

  double sd() const { return std::sqrt(h); }

  std::span<const double> support_u(std::size_t j) const {
    return std::span<const double>(u).subspan(j * dim_theta, dim_theta);
  }
  std::span<const double> support_x(std::size_t j) const {
    return std::span<const double>(x).subspan(j * dim_state, dim_state);
  }
  void validate() const;
};

// How the N_x start states of a block depend on the drawn theta.
//  conditional: j_i prop. to K_h(u - u^j), so each x^i follows the bridge's
//               conditional law given theta; theta itself follows c(u).
//  product:     j_i uniform and c(u)^{N_x} in the PMMH ratio (the literal
//               product of mixtures); kept for comparison.
enum class BridgeCoupling { conditional, product };

double bandwidth_rule_a3(std::size_t n, std::size_t d);

struct KdeDraw {
  Vec u;
  std::size_t index;
};

// j uniform, u = u^j + sqrt(h) * eps.
KdeDraw kde_sample_theta(const KdeBridge& bridge, Engine& eng);

// log c(u) = log (1/n) sum_j K_h(u - u^j).
double kde_marginal_logdensity(const KdeBridge& bridge, std::span<const double> u);

// log K_h(u - u^j) for every j.
Vec kde_kernel_logterms(const KdeBridge& bridge, std::span<const double> u);

// One state: j uniform, x ~ f_theta(.|xbar^j).
void bridge_sample_state(const KdeBridge& bridge, std::span<const double> theta,
                         const StateSpaceModel& model, std::span<double> x_out,
                         Engine& eng);

// n_x states for a theta-particle at u, following the coupling.
Vec bridge_sample_states(const KdeBridge& bridge, std::span<const double> theta,
                         std::span<const double> u, const StateSpaceModel& model,
                         std::size_t n_x, BridgeCoupling coupling, Engine& eng);

}  // namespace smc2fw
