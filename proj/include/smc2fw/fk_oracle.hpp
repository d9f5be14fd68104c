#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "smc2fw/kde.hpp"
#include "smc2fw/models.hpp"
#include "smc2fw/random.hpp"

namespace smc2fw {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Finite Feynman-Kac model with T steps:
//   eta_n = Phi_n(eta_{n-1}) = (eta_{n-1} * G_{n-1}) M_n / eta_{n-1}(G_{n-1}),
// potentials[p] = G_p for p = 0..T-1, kernels[p] = M_{p+1} (row-stochastic).
struct FiniteFK {
  Vector eta0;
  std::vector<Vector> potentials;
  std::vector<Matrix> kernels;

  std::size_t steps() const { return kernels.size(); }
  void validate() const;
};

struct Marginals {
  std::vector<Vector> eta;  // eta_0..eta_T
  Vec log_gamma;            // log gamma_n(1), n = 0..T
};

Vector phi_map(const Vector& mu, const Vector& g, const Matrix& m);
// Phi_{s,t}: steps s+1..t of the model applied to mu (eta_s-time measure).
Vector phi_flow(const FiniteFK& fk, std::size_t s, std::size_t t, Vector mu);
Marginals exact_marginals(const FiniteFK& fk);

double tv_distance(const Vector& a, const Vector& b);
double dobrushin(const Matrix& p);

struct Minorization {
  Vec epsilon;  // per kernel M_1..M_T
  Vec delta;    // per potential G_0..G_{T-1}
};
// epsilon from column minima (sum_z min_x M(x,z)); delta = max G / min G.
double kernel_epsilon(const Matrix& m);
Minorization minorization_constants(const FiniteFK& fk);

struct ContractionResult {
  double lhs = 0.0;
  double bound = 0.0;
  double epsilon = 0.0;
  double delta = 1.0;
  bool holds() const { return lhs <= bound * (1.0 + 1e-12) + 1e-15; }
};
// Worst-case delta over G_s..G_{t-1} and epsilon over M_{s+1}..M_t.
ContractionResult contraction_check(const FiniteFK& fk, std::size_t s, std::size_t t,
                                    const Vector& mu, const Vector& rho);

// |eta_T^1(phi) - eta_T^2(phi)| for two models sharing potentials.
double bias_check(const FiniteFK& fk1, const FiniteFK& fk2, const Vector& phi);

// Block chain: one block of T steps (potentials/kernels) repeated `blocks`
// times. The exact flow runs straight through. The approximate flow, at the
// start of every block after the first, replaces eta by eta * perturbation and
// uses perturbed_kernels (when given) inside that block. Returns B(bT) for
// b = 1..blocks (B(T) is 0 by construction).
struct BlockChain {
  Vector eta0;
  std::vector<Vector> potentials;      // T entries
  std::vector<Matrix> kernels;         // T entries
  Matrix perturbation;                 // row-stochastic, applied at block starts
  std::vector<Matrix> perturbed_kernels;  // empty, or T entries
};
Vec block_bias_profile(const BlockChain& chain, std::size_t blocks, const Vector& phi);

// Random models for the verification suites.
FiniteFK random_fk(std::size_t states, std::size_t steps, double floor, Engine& eng);
Matrix random_stochastic(std::size_t rows, std::size_t cols, double floor, Engine& eng);
Vector random_simplex(std::size_t n, Engine& eng);
BlockChain random_block_chain(std::size_t states, std::size_t window, double floor,
                              double perturbation, Engine& eng);

// Finite-state model with a finite theta grid; used for the exact bridge law.
struct FiniteSsm {
  Vec prior;                              // over the grid
  std::vector<Vector> init;               // law of x_0 per theta
  std::vector<Matrix> kernel;             // per theta
  std::vector<std::vector<Vector>> lik;   // [theta][k-1] = g(y_k | .) over states
};
// zeta(theta, x_{n+1}) prop. to prior * p(y_1..n, x_{n+1}), normalized jointly.
Matrix exact_zeta(const FiniteSsm& ssm, std::size_t n);

// ---------------------------------------------------------------------------
// Helpers tying the oracle to FiniteHmmModel.

// FK model with eta_0 = law of x_1, G_p = g(y_{p+1}|.), so gamma_n(1) = p(y_1..n).
FiniteFK hmm_fk(const FiniteHmmModel& model, double rho, std::span<const double> y);
double hmm_loglik(const FiniteHmmModel& model, double rho, std::span<const double> y);
// Same with an explicit law for the first observed state.
double hmm_loglik_from(const FiniteHmmModel& model, double rho, const Vector& start,
                       std::span<const double> y);

// E[rho | y] under the model's prior, by quadrature over u = log rho.
double hmm_posterior_mean(const FiniteHmmModel& model, std::span<const double> y);

// E[rho] under the target of a later block with the bridge held fixed:
// density in u prop. to c(u)^power * p(y_window | x_start ~ q_u) where q_u is
// the bridge's start law for the coupling.
double hmm_bridge_posterior_mean(const FiniteHmmModel& model, const KdeBridge& bridge,
                                 BridgeCoupling coupling, std::size_t n_x,
                                 std::span<const double> y_window);

// Trapezoid rule of exp(logf) * h(u) over a uniform grid, normalized by the
// same rule applied to exp(logf).
double quadrature_mean(const Vec& grid, const Vec& logf, const Vec& h);

}  // namespace smc2fw
