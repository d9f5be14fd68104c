#include "smc2fw/fk_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "smc2fw/errors.hpp"

namespace smc2fw {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_stochastic(const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (std::abs(m.row(r).sum() - 1.0) > 1e-12 || (m.row(r).array() < 0.0).any()) {
      throw std::invalid_argument("kernel rows must be probability vectors");
    }
  }
}

double log_sum_exp(const Vec& v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

Vec uniform_grid(double lo, double hi, std::size_t n) {
  Vec g(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return g;
}

// Start law of the first state of a window under the bridge.
Vector bridge_start_law(const FiniteHmmModel& model, const KdeBridge& bridge,
                        BridgeCoupling coupling, double u) {
  const std::size_t m = model.n_states();
  Vector w = Vector::Zero(static_cast<Eigen::Index>(m));
  if (coupling == BridgeCoupling::conditional) {
    const Vec lt = kde_kernel_logterms(bridge, std::span<const double>(&u, 1));
    const double mx = *std::max_element(lt.begin(), lt.end());
    for (std::size_t j = 0; j < bridge.n; ++j) {
      w(static_cast<Eigen::Index>(bridge.x[j])) += std::exp(lt[j] - mx);
    }
  } else {
    for (std::size_t j = 0; j < bridge.n; ++j) w(static_cast<Eigen::Index>(bridge.x[j])) += 1.0;
  }
  w /= w.sum();
  const Vec tm = model.transition_matrix(std::exp(u));
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      mm(tm.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  return mm.transpose() * w;
}

}  // namespace

void FiniteFK::validate() const {
  if (potentials.size() != kernels.size()) {
    throw std::invalid_argument("need one potential per kernel");
  }
  if (std::abs(eta0.sum() - 1.0) > 1e-12 || (eta0.array() < 0.0).any()) {
    throw std::invalid_argument("eta0 must be a probability vector");
  }
  Eigen::Index size = eta0.size();
  for (std::size_t p = 0; p < kernels.size(); ++p) {
    if (potentials[p].size() != size || kernels[p].rows() != size) {
      throw std::invalid_argument("dimension mismatch between steps");
    }
    if ((potentials[p].array() <= 0.0).any()) {
      throw std::invalid_argument("potentials must be strictly positive");
    }
    check_stochastic(kernels[p]);
    size = kernels[p].cols();
  }
}

Vector phi_map(const Vector& mu, const Vector& g, const Matrix& m) {
  const Vector weighted = mu.cwiseProduct(g);
  const double z = weighted.sum();
  if (!(z > 0.0)) throw DegenerateWeightsError("mu(G) = 0");
  return m.transpose() * (weighted / z);
}

Vector phi_flow(const FiniteFK& fk, std::size_t s, std::size_t t, Vector mu) {
  for (std::size_t p = s; p < t; ++p) mu = phi_map(mu, fk.potentials[p], fk.kernels[p]);
  return mu;
}

Marginals exact_marginals(const FiniteFK& fk) {
  Marginals out;
  out.eta.push_back(fk.eta0);
  out.log_gamma.push_back(0.0);
  for (std::size_t p = 0; p < fk.steps(); ++p) {
    const Vector& eta = out.eta.back();
    const double z = eta.dot(fk.potentials[p]);
    if (!(z > 0.0)) throw DegenerateWeightsError("eta(G) = 0");
    out.log_gamma.push_back(out.log_gamma.back() + std::log(z));
    out.eta.push_back(phi_map(eta, fk.potentials[p], fk.kernels[p]));
  }
  return out;
}

double tv_distance(const Vector& a, const Vector& b) { return 0.5 * (a - b).cwiseAbs().sum(); }

double dobrushin(const Matrix& p) {
  double beta = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < p.rows(); ++j) {
      beta = std::max(beta, 0.5 * (p.row(i) - p.row(j)).cwiseAbs().sum());
    }
  }
  return beta;
}

double kernel_epsilon(const Matrix& m) {
  const double eps = m.colwise().minCoeff().sum();
  // Every pair of rows shares at least the column-minima mass.
  if (eps > 1.0 - dobrushin(m) + 1e-12) {
    throw std::logic_error("minorization constant exceeds 1 - Dobrushin coefficient");
  }
  return eps;
}

Minorization minorization_constants(const FiniteFK& fk) {
  Minorization mc;
  for (const auto& k : fk.kernels) mc.epsilon.push_back(kernel_epsilon(k));
  for (const auto& g : fk.potentials) mc.delta.push_back(g.maxCoeff() / g.minCoeff());
  return mc;
}

ContractionResult contraction_check(const FiniteFK& fk, std::size_t s, std::size_t t,
                                    const Vector& mu, const Vector& rho) {
  if (s > t || t > fk.steps()) throw std::invalid_argument("need s <= t <= T");
  ContractionResult r;
  r.lhs = tv_distance(phi_flow(fk, s, t, mu), phi_flow(fk, s, t, rho));
  const Minorization mc = minorization_constants(fk);
  r.epsilon = 1.0;
  r.delta = 1.0;
  for (std::size_t p = s; p < t; ++p) {
    r.epsilon = std::min(r.epsilon, mc.epsilon[p]);
    r.delta = std::max(r.delta, mc.delta[p]);
  }
  if (r.epsilon <= 0.0) {
    r.bound = std::numeric_limits<double>::infinity();
    return r;
  }
  const double ratio = r.delta / r.epsilon;
  r.bound = 2.0 * ratio * ratio *
            std::pow(1.0 - r.epsilon * r.epsilon, static_cast<double>(t - s)) *
            tv_distance(mu, rho);
  return r;
}

double bias_check(const FiniteFK& fk1, const FiniteFK& fk2, const Vector& phi) {
  const Vector a = phi_flow(fk1, 0, fk1.steps(), fk1.eta0);
  const Vector b = phi_flow(fk2, 0, fk2.steps(), fk2.eta0);
  return std::abs(a.dot(phi) - b.dot(phi));
}

Vec block_bias_profile(const BlockChain& chain, std::size_t blocks, const Vector& phi) {
  const std::size_t T = chain.kernels.size();
  Vector exact = chain.eta0;
  Vector approx = chain.eta0;
  Vec out;
  for (std::size_t b = 1; b <= blocks; ++b) {
    const bool perturbed = b >= 2;
    if (perturbed) approx = chain.perturbation.transpose() * approx;
    for (std::size_t p = 0; p < T; ++p) {
      exact = phi_map(exact, chain.potentials[p], chain.kernels[p]);
      const Matrix& k = (perturbed && !chain.perturbed_kernels.empty())
                            ? chain.perturbed_kernels[p]
                            : chain.kernels[p];
      approx = phi_map(approx, chain.potentials[p], k);
    }
    out.push_back(std::abs(exact.dot(phi) - approx.dot(phi)));
  }
  return out;
}

Vector random_simplex(std::size_t n, Engine& eng) {
  std::exponential_distribution<double> e(1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = e(eng);
  return v / v.sum();
}

Matrix random_stochastic(std::size_t rows, std::size_t cols, double floor, Engine& eng) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Vector d = random_simplex(cols, eng);
    m.row(r) = (floor / static_cast<double>(cols) + (1.0 - floor) * d.array()).matrix().transpose();
    m.row(r) /= m.row(r).sum();
  }
  return m;
}

FiniteFK random_fk(std::size_t states, std::size_t steps, double floor, Engine& eng) {
  std::uniform_real_distribution<double> lg(-1.0, 1.0);
  FiniteFK fk;
  fk.eta0 = random_simplex(states, eng);
  for (std::size_t p = 0; p < steps; ++p) {
    Vector g(static_cast<Eigen::Index>(states));
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = std::exp(lg(eng));
    fk.potentials.push_back(g);
    fk.kernels.push_back(random_stochastic(states, states, floor, eng));
  }
  return fk;
}

BlockChain random_block_chain(std::size_t states, std::size_t window, double floor,
                              double perturbation, Engine& eng) {
  const FiniteFK fk = random_fk(states, window, floor, eng);
  BlockChain c;
  c.eta0 = fk.eta0;
  c.potentials = fk.potentials;
  c.kernels = fk.kernels;
  const auto n = static_cast<Eigen::Index>(states);
  c.perturbation = (1.0 - perturbation) * Matrix::Identity(n, n) +
                   perturbation * random_stochastic(states, states, 0.0, eng);
  return c;
}

Matrix exact_zeta(const FiniteSsm& ssm, std::size_t n) {
  const std::size_t a_count = ssm.prior.size();
  if (a_count == 0) throw std::invalid_argument("empty theta grid");
  std::vector<Vector> rows(a_count);
  Vec log_scale(a_count, kNegInf);
  for (std::size_t a = 0; a < a_count; ++a) {
    if (!(ssm.prior[a] > 0.0)) continue;
    Vector alpha = ssm.init[a];
    double ls = std::log(ssm.prior[a]);
    for (std::size_t k = 1; k <= n; ++k) {
      alpha = (ssm.kernel[a].transpose() * alpha).cwiseProduct(ssm.lik[a][k - 1]);
      const double z = alpha.sum();
      if (!(z > 0.0)) {
        ls = kNegInf;
        break;
      }
      ls += std::log(z);
      alpha /= z;
    }
    if (ls == kNegInf) continue;
    rows[a] = ssm.kernel[a].transpose() * alpha;
    log_scale[a] = ls;
  }
  const double total = log_sum_exp(log_scale);
  if (total == kNegInf) throw DegenerateWeightsError("data impossible under every theta");
  const auto states = ssm.kernel[0].cols();
  Matrix zeta = Matrix::Zero(static_cast<Eigen::Index>(a_count), states);
  for (std::size_t a = 0; a < a_count; ++a) {
    if (log_scale[a] == kNegInf) continue;
    zeta.row(static_cast<Eigen::Index>(a)) = std::exp(log_scale[a] - total) * rows[a].transpose();
  }
  return zeta;
}

FiniteFK hmm_fk(const FiniteHmmModel& model, double rho, std::span<const double> y) {
  const auto m = static_cast<Eigen::Index>(model.n_states());
  const Vec tm = model.transition_matrix(rho);
  Matrix mm(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) mm(i, j) = tm[static_cast<std::size_t>(i * m + j)];
  }
  FiniteFK fk;
  const Vector init = Vector::Constant(m, 1.0 / static_cast<double>(m));
  fk.eta0 = mm.transpose() * init;
  for (double obs : y) {
    Vector g(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      g(i) = std::exp(model.emission_logdensity(static_cast<std::size_t>(i), obs));
    }
    fk.potentials.push_back(g);
    fk.kernels.push_back(mm);
  }
  return fk;
}

double hmm_loglik(const FiniteHmmModel& model, double rho, std::span<const double> y) {
  return exact_marginals(hmm_fk(model, rho, y)).log_gamma.back();
}

double hmm_loglik_from(const FiniteHmmModel& model, double rho, const Vector& start,
                       std::span<const double> y) {
  FiniteFK fk = hmm_fk(model, rho, y);
  fk.eta0 = start;
  return exact_marginals(fk).log_gamma.back();
}

double quadrature_mean(const Vec& grid, const Vec& logf, const Vec& h) {
  double mx = kNegInf;
  for (double v : logf) mx = std::max(mx, v);
  if (mx == kNegInf) throw DegenerateWeightsError("quadrature target vanishes");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double w = (i == 0 || i + 1 == grid.size()) ? 0.5 : 1.0;
    const double f = std::exp(logf[i] - mx);
    num += w * f * h[i];
    den += w * f;
  }
  return num / den;
}

double hmm_posterior_mean(const FiniteHmmModel& model, std::span<const double> y) {
  const Vec grid = uniform_grid(-12.0, 5.0, 8001);
  Vec logf(grid.size()), h(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double u = grid[i];
    logf[i] = model.prior_logdensity_unconstrained(std::span<const double>(&u, 1)) +
              hmm_loglik(model, std::exp(u), y);
    h[i] = std::exp(u);
  }
  return quadrature_mean(grid, logf, h);
}

double hmm_bridge_posterior_mean(const FiniteHmmModel& model, const KdeBridge& bridge,
                                 BridgeCoupling coupling, std::size_t n_x,
                                 std::span<const double> y_window) {
  if (bridge.dim_theta != 1) throw std::invalid_argument("bridge must be one-dimensional");
  const auto [lo_it, hi_it] = std::minmax_element(bridge.u.begin(), bridge.u.end());
  const double lo = *lo_it - 10.0 * bridge.sd();
  const double hi = *hi_it + 10.0 * bridge.sd();
  const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / (bridge.sd() / 40.0))) + 1;
  const Vec grid = uniform_grid(lo, hi, std::max<std::size_t>(n, 2001));
  const double power = coupling == BridgeCoupling::product ? static_cast<double>(n_x) : 1.0;
  Vec logf(grid.size()), h(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double u = grid[i];
    const double c = kde_marginal_logdensity(bridge, std::span<const double>(&u, 1));
    const Vector start = bridge_start_law(model, bridge, coupling, u);
    logf[i] = power * c + hmm_loglik_from(model, std::exp(u), start, y_window);
    h[i] = std::exp(u);
  }
  return quadrature_mean(grid, logf, h);
}

}  // namespace smc2fw
