#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smc2fw/random.hpp"

namespace smc2fw {

using Vec = std::vector<double>;
using Blocks = std::vector<std::vector<std::size_t>>;

// Every parameter in this library is positive; samplers work on u = log(theta).
struct ThetaTransform {
  static Vec to_unconstrained(std::span<const double> theta);
  static Vec to_natural(std::span<const double> u);
  // log |d theta / d u|
  static double log_jacobian(std::span<const double> u);
};

// A state-space model: hidden Markov chain x_0, x_1, ... with scalar
// observations y_k depending on x_k, indexed by a static parameter theta.
// States are flat arrays of dim_state() doubles; theta is on the natural scale.
class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  virtual std::size_t dim_theta() const = 0;
  virtual std::size_t dim_state() const = 0;
  virtual std::vector<std::string> theta_names() const = 0;

  virtual double prior_logdensity(std::span<const double> theta) const = 0;
  virtual Vec prior_sample(Engine& eng) const = 0;

  virtual void init_sample(std::span<const double> theta, std::span<double> x0,
                           Engine& eng) const = 0;
  virtual std::optional<double> init_logdensity(std::span<const double> theta,
                                                std::span<const double> x0) const;

  virtual void transition_sample(std::span<const double> theta,
                                 std::span<const double> x,
                                 std::span<double> x_next, Engine& eng) const = 0;
  virtual bool has_transition_density() const { return false; }
  // Throws std::logic_error when has_transition_density() is false.
  virtual double transition_logdensity(std::span<const double> theta,
                                       std::span<const double> x,
                                       std::span<const double> x_next) const;

  virtual double obs_logdensity(std::span<const double> theta,
                                std::span<const double> x, double y) const = 0;
  virtual double obs_sample(std::span<const double> theta,
                            std::span<const double> x, Engine& eng) const = 0;

  // Batched forms used by the particle filter. dst[i] is drawn from
  // f(.|src[ancestors[i]]). Defaults loop over the scalar versions.
  virtual void transition_batch(std::span<const double> theta,
                                std::span<const double> src,
                                std::span<const std::size_t> ancestors,
                                std::span<double> dst, Engine& eng) const;
  virtual void obs_logdensity_batch(std::span<const double> theta,
                                    std::span<const double> xs, double y,
                                    std::span<double> out) const;

  // Suggested PMMH update blocks over theta coordinates.
  virtual Blocks default_blocks() const;

  // log prior of u = log(theta), Jacobian included.
  double prior_logdensity_unconstrained(std::span<const double> u) const;
};

// ---------------------------------------------------------------------------
// Gaussian random walk observed in Gaussian noise.
//   x_0 ~ N(0, 1/tau0), x_k | x_{k-1} ~ N(x_{k-1}, 1/tau), y_k | x_k ~ N(x_k, 1/lambda)
// tau0 is fixed; theta = (tau, lambda).

struct LinearGaussianParams {
  double tau0 = 1.0;
  double tau = 1.0;
  double lambda = 1.0;

  void validate() const;
};

class LinearGaussianModel final : public StateSpaceModel {
 public:
  explicit LinearGaussianModel(LinearGaussianParams params);

  std::size_t dim_theta() const override { return 2; }
  std::size_t dim_state() const override { return 1; }
  std::vector<std::string> theta_names() const override { return {"tau", "lambda"}; }

  double prior_logdensity(std::span<const double> theta) const override;
  Vec prior_sample(Engine& eng) const override;
  void init_sample(std::span<const double> theta, std::span<double> x0,
                   Engine& eng) const override;
  std::optional<double> init_logdensity(std::span<const double> theta,
                                        std::span<const double> x0) const override;
  void transition_sample(std::span<const double> theta, std::span<const double> x,
                         std::span<double> x_next, Engine& eng) const override;
  bool has_transition_density() const override { return true; }
  double transition_logdensity(std::span<const double> theta,
                               std::span<const double> x,
                               std::span<const double> x_next) const override;
  double obs_logdensity(std::span<const double> theta, std::span<const double> x,
                        double y) const override;
  double obs_sample(std::span<const double> theta, std::span<const double> x,
                    Engine& eng) const override;
  void transition_batch(std::span<const double> theta, std::span<const double> src,
                        std::span<const std::size_t> ancestors, std::span<double> dst,
                        Engine& eng) const override;
  void obs_logdensity_batch(std::span<const double> theta, std::span<const double> xs,
                            double y, std::span<double> out) const override;
  Blocks default_blocks() const override { return {{0}, {1}}; }

  const LinearGaussianParams& params() const { return params_; }
  Vec true_theta() const { return {params_.tau, params_.lambda}; }
  // Full parameter set for a theta = (tau, lambda), with this model's tau0.
  LinearGaussianParams params_at(std::span<const double> theta) const;

 private:
  LinearGaussianParams params_;
};

LinearGaussianModel lg_model(const LinearGaussianParams& params);

// ---------------------------------------------------------------------------
// Levy-driven stochastic volatility (Gamma-OU variance).
// sigma^2 decays at rate lambda and jumps at Poisson rate lambda*kappa with
// Exp(rate delta) sizes, so its stationary law is Gamma(kappa, rate delta).
// Over one interval the integrated variance is
//   v_n = (sum of jumps - sigma^2(n) + sigma^2(n-1)) / lambda
// and y_n ~ N(gamma * v_n, v_n). State is (sigma^2(n), v_n).

struct LevySVParams {
  double kappa = 1.0;
  double delta = 1.0;
  double gamma = 0.2;
  double lambda = 0.3;
  double delta_t = 1.0;

  void validate() const;
};

struct LevyJump {
  double time;  // arrival time within (0, delta_t]
  double size;
};

struct LevyStep {
  double sigma2;
  double integrated_variance;
};

// Deterministic part of the Levy transition given the jumps of one interval.
LevyStep levy_propagate(double lambda, double delta_t, double sigma2_prev,
                        std::span<const LevyJump> jumps);

class LevySVModel final : public StateSpaceModel {
 public:
  explicit LevySVModel(LevySVParams params);

  std::size_t dim_theta() const override { return 4; }
  std::size_t dim_state() const override { return 2; }
  std::vector<std::string> theta_names() const override {
    return {"kappa", "delta", "gamma", "lambda"};
  }

  double prior_logdensity(std::span<const double> theta) const override;
  Vec prior_sample(Engine& eng) const override;
  void init_sample(std::span<const double> theta, std::span<double> x0,
                   Engine& eng) const override;
  std::optional<double> init_logdensity(std::span<const double> theta,
                                        std::span<const double> x0) const override;
  void transition_sample(std::span<const double> theta, std::span<const double> x,
                         std::span<double> x_next, Engine& eng) const override;
  double obs_logdensity(std::span<const double> theta, std::span<const double> x,
                        double y) const override;
  double obs_sample(std::span<const double> theta, std::span<const double> x,
                    Engine& eng) const override;
  // kappa and delta are strongly correlated and move together.
  Blocks default_blocks() const override { return {{0, 1}, {2}, {3}}; }

  const LevySVParams& params() const { return params_; }
  Vec true_theta() const {
    return {params_.kappa, params_.delta, params_.gamma, params_.lambda};
  }

 private:
  LevySVParams params_;
};

LevySVModel levy_sv_model(const LevySVParams& params);

// ---------------------------------------------------------------------------
// Finite-state hidden Markov model with Gaussian emissions. theta = (rho), a
// switching rate: the chain leaves its state with probability
// s = (1 - exp(-rho)) (m-1)/m, uniformly to the other states. x_0 is uniform.

struct FiniteHmmParams {
  Vec means = {-1.0, 1.0};
  double obs_sd = 1.0;
  double rho = 0.5;

  void validate() const;
};

class FiniteHmmModel final : public StateSpaceModel {
 public:
  explicit FiniteHmmModel(FiniteHmmParams params);

  std::size_t dim_theta() const override { return 1; }
  std::size_t dim_state() const override { return 1; }
  std::vector<std::string> theta_names() const override { return {"rho"}; }
  std::size_t n_states() const { return params_.means.size(); }

  double prior_logdensity(std::span<const double> theta) const override;
  Vec prior_sample(Engine& eng) const override;
  void init_sample(std::span<const double> theta, std::span<double> x0,
                   Engine& eng) const override;
  std::optional<double> init_logdensity(std::span<const double> theta,
                                        std::span<const double> x0) const override;
  void transition_sample(std::span<const double> theta, std::span<const double> x,
                         std::span<double> x_next, Engine& eng) const override;
  bool has_transition_density() const override { return true; }
  double transition_logdensity(std::span<const double> theta,
                               std::span<const double> x,
                               std::span<const double> x_next) const override;
  double obs_logdensity(std::span<const double> theta, std::span<const double> x,
                        double y) const override;
  double obs_sample(std::span<const double> theta, std::span<const double> x,
                    Engine& eng) const override;
  Blocks default_blocks() const override { return {{0}}; }

  const FiniteHmmParams& params() const { return params_; }
  Vec true_theta() const { return {params_.rho}; }
  double switch_probability(double rho) const;
  // Row-stochastic transition matrix, row-major m x m.
  Vec transition_matrix(double rho) const;
  double emission_logdensity(std::size_t state, double y) const;

 private:
  FiniteHmmParams params_;
};

FiniteHmmModel finite_hmm_model(const FiniteHmmParams& params);

// ---------------------------------------------------------------------------

struct SimulatedPath {
  std::size_t dim_state = 1;
  Vec states;  // (n+1) * dim_state, x_0 first
  Vec y;       // y_1..y_n
};

// Draws (x_{0:n}, y_{1:n}) from the joint law at theta.
SimulatedPath simulate(const StateSpaceModel& model, std::span<const double> theta,
                       std::size_t n, Engine& eng);

SimulatedPath lg_simulate(const LinearGaussianParams& params, std::size_t n,
                          Engine& eng);

}  // namespace smc2fw
