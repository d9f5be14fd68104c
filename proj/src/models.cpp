#include "smc2fw/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "smc2fw/errors.hpp"

namespace smc2fw {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double normal_logpdf(double x, double mean, double precision) {
  const double d = x - mean;
  return 0.5 * std::log(precision) - kHalfLog2Pi - 0.5 * precision * d * d;
}

bool all_positive(std::span<const double> theta) {
  return std::all_of(theta.begin(), theta.end(),
                     [](double v) { return v > 0.0 && std::isfinite(v); });
}

// Independent Exp(1) on every coordinate.
double exp1_prior_logdensity(std::span<const double> theta) {
  if (!all_positive(theta)) return kNegInf;
  double s = 0.0;
  for (double v : theta) s -= v;
  return s;
}

Vec exp1_prior_sample(std::size_t d, Engine& eng) {
  std::exponential_distribution<double> e(1.0);
  Vec theta(d);
  for (auto& v : theta) v = e(eng);
  return theta;
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ParameterDomainError(std::string(name) + " must be positive and finite");
  }
}

}  // namespace

Vec ThetaTransform::to_unconstrained(std::span<const double> theta) {
  Vec u(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) u[i] = std::log(theta[i]);
  return u;
}

Vec ThetaTransform::to_natural(std::span<const double> u) {
  Vec theta(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) theta[i] = std::exp(u[i]);
  return theta;
}

double ThetaTransform::log_jacobian(std::span<const double> u) {
  double s = 0.0;
  for (double v : u) s += v;
  return s;
}

// ---------------------------------------------------------------------------

std::optional<double> StateSpaceModel::init_logdensity(std::span<const double>,
                                                       std::span<const double>) const {
  return std::nullopt;
}

double StateSpaceModel::transition_logdensity(std::span<const double>,
                                              std::span<const double>,
                                              std::span<const double>) const {
  throw std::logic_error("transition density not available for this model");
}

void StateSpaceModel::transition_batch(std::span<const double> theta,
                                       std::span<const double> src,
                                       std::span<const std::size_t> ancestors,
                                       std::span<double> dst, Engine& eng) const {
  const std::size_t ds = dim_state();
  for (std::size_t i = 0; i < ancestors.size(); ++i) {
    transition_sample(theta, src.subspan(ancestors[i] * ds, ds), dst.subspan(i * ds, ds),
                      eng);
  }
}

void StateSpaceModel::obs_logdensity_batch(std::span<const double> theta,
                                           std::span<const double> xs, double y,
                                           std::span<double> out) const {
  const std::size_t ds = dim_state();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = obs_logdensity(theta, xs.subspan(i * ds, ds), y);
  }
}

Blocks StateSpaceModel::default_blocks() const {
  Blocks b(1);
  for (std::size_t i = 0; i < dim_theta(); ++i) b[0].push_back(i);
  return b;
}

double StateSpaceModel::prior_logdensity_unconstrained(std::span<const double> u) const {
  for (double v : u) {
    if (!std::isfinite(v)) return kNegInf;
  }
  const Vec theta = ThetaTransform::to_natural(u);
  const double lp = prior_logdensity(theta);
  if (lp == kNegInf) return kNegInf;
  return lp + ThetaTransform::log_jacobian(u);
}

// ---------------------------------------------------------------------------

void LinearGaussianParams::validate() const {
  require_positive(tau0, "tau0");
  require_positive(tau, "tau");
  require_positive(lambda, "lambda");
}

LinearGaussianModel::LinearGaussianModel(LinearGaussianParams params) : params_(params) {
  params_.validate();
}

LinearGaussianParams LinearGaussianModel::params_at(std::span<const double> theta) const {
  return {params_.tau0, theta[0], theta[1]};
}

double LinearGaussianModel::prior_logdensity(std::span<const double> theta) const {
  return exp1_prior_logdensity(theta);
}

Vec LinearGaussianModel::prior_sample(Engine& eng) const { return exp1_prior_sample(2, eng); }

void LinearGaussianModel::init_sample(std::span<const double>, std::span<double> x0,
                                      Engine& eng) const {
  x0[0] = standard_normal(eng) / std::sqrt(params_.tau0);
}

std::optional<double> LinearGaussianModel::init_logdensity(std::span<const double>,
                                                           std::span<const double> x0) const {
  return normal_logpdf(x0[0], 0.0, params_.tau0);
}

void LinearGaussianModel::transition_sample(std::span<const double> theta,
                                            std::span<const double> x,
                                            std::span<double> x_next, Engine& eng) const {
  x_next[0] = x[0] + standard_normal(eng) / std::sqrt(theta[0]);
}

double LinearGaussianModel::transition_logdensity(std::span<const double> theta,
                                                  std::span<const double> x,
                                                  std::span<const double> x_next) const {
  return normal_logpdf(x_next[0], x[0], theta[0]);
}

double LinearGaussianModel::obs_logdensity(std::span<const double> theta,
                                           std::span<const double> x, double y) const {
  return normal_logpdf(y, x[0], theta[1]);
}

double LinearGaussianModel::obs_sample(std::span<const double> theta,
                                       std::span<const double> x, Engine& eng) const {
  return x[0] + standard_normal(eng) / std::sqrt(theta[1]);
}

void LinearGaussianModel::transition_batch(std::span<const double> theta,
                                           std::span<const double> src,
                                           std::span<const std::size_t> ancestors,
                                           std::span<double> dst, Engine& eng) const {
  const double sd = 1.0 / std::sqrt(theta[0]);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < ancestors.size(); ++i) {
    dst[i] = src[ancestors[i]] + sd * noise(eng);
  }
}

void LinearGaussianModel::obs_logdensity_batch(std::span<const double> theta,
                                               std::span<const double> xs, double y,
                                               std::span<double> out) const {
  const double lam = theta[1];
  const double c = 0.5 * std::log(lam) - kHalfLog2Pi;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = y - xs[i];
    out[i] = c - 0.5 * lam * d * d;
  }
}

LinearGaussianModel lg_model(const LinearGaussianParams& params) {
  return LinearGaussianModel(params);
}

// ---------------------------------------------------------------------------

void LevySVParams::validate() const {
  require_positive(kappa, "kappa");
  require_positive(delta, "delta");
  require_positive(gamma, "gamma");
  require_positive(lambda, "lambda");
  require_positive(delta_t, "delta_t");
}

LevyStep levy_propagate(double lambda, double delta_t, double sigma2_prev,
                        std::span<const LevyJump> jumps) {
  // -expm1(-a) = 1 - exp(-a), accurate for small a and never negative.
  const double keep = std::exp(-lambda * delta_t);
  double sigma2 = keep * sigma2_prev;
  double integrated = -std::expm1(-lambda * delta_t) * sigma2_prev;
  for (const auto& j : jumps) {
    const double remaining = delta_t - j.time;
    sigma2 += j.size * std::exp(-lambda * remaining);
    integrated += j.size * -std::expm1(-lambda * remaining);
  }
  return {sigma2, integrated / lambda};
}

LevySVModel::LevySVModel(LevySVParams params) : params_(params) { params_.validate(); }

double LevySVModel::prior_logdensity(std::span<const double> theta) const {
  return exp1_prior_logdensity(theta);
}

Vec LevySVModel::prior_sample(Engine& eng) const { return exp1_prior_sample(4, eng); }

void LevySVModel::init_sample(std::span<const double> theta, std::span<double> x0,
                              Engine& eng) const {
  std::gamma_distribution<double> g(theta[0], 1.0 / theta[1]);
  x0[0] = g(eng);
  x0[1] = 0.0;
}

std::optional<double> LevySVModel::init_logdensity(std::span<const double> theta,
                                                   std::span<const double> x0) const {
  const double k = theta[0], d = theta[1], s = x0[0];
  if (!(s > 0.0)) return kNegInf;
  return k * std::log(d) - std::lgamma(k) + (k - 1.0) * std::log(s) - d * s;
}

void LevySVModel::transition_sample(std::span<const double> theta,
                                    std::span<const double> x, std::span<double> x_next,
                                    Engine& eng) const {
  const double kappa = theta[0], delta = theta[1], lambda = theta[3];
  const double dt = params_.delta_t;
  std::poisson_distribution<int> count(lambda * kappa * dt);
  std::uniform_real_distribution<double> when(0.0, dt);
  std::exponential_distribution<double> size(delta);
  const int k = count(eng);
  LevyJump buf[16];
  std::vector<LevyJump> big;
  std::span<LevyJump> jumps;
  if (k <= 16) {
    jumps = std::span<LevyJump>(buf, static_cast<std::size_t>(k));
  } else {
    big.resize(static_cast<std::size_t>(k));
    jumps = big;
  }
  for (auto& j : jumps) {
    j.time = when(eng);
    j.size = size(eng);
  }
  const LevyStep s = levy_propagate(lambda, dt, x[0], jumps);
  x_next[0] = s.sigma2;
  x_next[1] = s.integrated_variance;
}

double LevySVModel::obs_logdensity(std::span<const double> theta,
                                   std::span<const double> x, double y) const {
  const double v = x[1];
  if (!(v > 0.0)) return kNegInf;
  // Variance form: 1/v overflows for subnormal v and would give inf - inf.
  const double d = y - theta[2] * v;
  return -kHalfLog2Pi - 0.5 * std::log(v) - 0.5 * d * d / v;
}

double LevySVModel::obs_sample(std::span<const double> theta, std::span<const double> x,
                               Engine& eng) const {
  const double v = x[1];
  return theta[2] * v + std::sqrt(v) * standard_normal(eng);
}

LevySVModel levy_sv_model(const LevySVParams& params) { return LevySVModel(params); }

// ---------------------------------------------------------------------------

void FiniteHmmParams::validate() const {
  if (means.size() < 2) throw ParameterDomainError("finite HMM needs at least two states");
  require_positive(obs_sd, "obs_sd");
  require_positive(rho, "rho");
}

FiniteHmmModel::FiniteHmmModel(FiniteHmmParams params) : params_(std::move(params)) {
  params_.validate();
}

double FiniteHmmModel::switch_probability(double rho) const {
  const double m = static_cast<double>(n_states());
  return -std::expm1(-rho) * (m - 1.0) / m;
}

Vec FiniteHmmModel::transition_matrix(double rho) const {
  const std::size_t m = n_states();
  const double s = switch_probability(rho);
  const double off = s / static_cast<double>(m - 1);
  Vec mat(m * m, off);
  for (std::size_t i = 0; i < m; ++i) mat[i * m + i] = 1.0 - s;
  return mat;
}

double FiniteHmmModel::emission_logdensity(std::size_t state, double y) const {
  const double prec = 1.0 / (params_.obs_sd * params_.obs_sd);
  return normal_logpdf(y, params_.means[state], prec);
}

double FiniteHmmModel::prior_logdensity(std::span<const double> theta) const {
  return exp1_prior_logdensity(theta);
}

Vec FiniteHmmModel::prior_sample(Engine& eng) const { return exp1_prior_sample(1, eng); }

void FiniteHmmModel::init_sample(std::span<const double>, std::span<double> x0,
                                 Engine& eng) const {
  std::uniform_int_distribution<std::size_t> u(0, n_states() - 1);
  x0[0] = static_cast<double>(u(eng));
}

std::optional<double> FiniteHmmModel::init_logdensity(std::span<const double>,
                                                      std::span<const double>) const {
  return -std::log(static_cast<double>(n_states()));
}

void FiniteHmmModel::transition_sample(std::span<const double> theta,
                                       std::span<const double> x, std::span<double> x_next,
                                       Engine& eng) const {
  const std::size_t m = n_states();
  const auto cur = static_cast<std::size_t>(x[0]);
  if (uniform01(eng) < switch_probability(theta[0])) {
    std::uniform_int_distribution<std::size_t> other(0, m - 2);
    std::size_t k = other(eng);
    if (k >= cur) ++k;
    x_next[0] = static_cast<double>(k);
  } else {
    x_next[0] = static_cast<double>(cur);
  }
}

double FiniteHmmModel::transition_logdensity(std::span<const double> theta,
                                             std::span<const double> x,
                                             std::span<const double> x_next) const {
  const double s = switch_probability(theta[0]);
  if (x[0] == x_next[0]) return std::log1p(-s);
  return std::log(s / static_cast<double>(n_states() - 1));
}

double FiniteHmmModel::obs_logdensity(std::span<const double>, std::span<const double> x,
                                      double y) const {
  return emission_logdensity(static_cast<std::size_t>(x[0]), y);
}

double FiniteHmmModel::obs_sample(std::span<const double>, std::span<const double> x,
                                  Engine& eng) const {
  return params_.means[static_cast<std::size_t>(x[0])] + params_.obs_sd * standard_normal(eng);
}

FiniteHmmModel finite_hmm_model(const FiniteHmmParams& params) {
  return FiniteHmmModel(params);
}

// ---------------------------------------------------------------------------

SimulatedPath simulate(const StateSpaceModel& model, std::span<const double> theta,
                       std::size_t n, Engine& eng) {
  const std::size_t ds = model.dim_state();
  SimulatedPath path;
  path.dim_state = ds;
  path.states.resize((n + 1) * ds);
  path.y.resize(n);
  std::span<double> xs(path.states);
  model.init_sample(theta, xs.subspan(0, ds), eng);
  for (std::size_t k = 1; k <= n; ++k) {
    model.transition_sample(theta, xs.subspan((k - 1) * ds, ds), xs.subspan(k * ds, ds), eng);
    path.y[k - 1] = model.obs_sample(theta, xs.subspan(k * ds, ds), eng);
  }
  return path;
}

SimulatedPath lg_simulate(const LinearGaussianParams& params, std::size_t n, Engine& eng) {
  const LinearGaussianModel model(params);
  const Vec theta = model.true_theta();
  return simulate(model, theta, n, eng);
}

}  // namespace smc2fw
