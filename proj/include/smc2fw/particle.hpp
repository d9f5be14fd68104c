#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "smc2fw/models.hpp"
#include "smc2fw/random.hpp"

namespace smc2fw {

using Indices = std::vector<std::size_t>;

// Normalized weights from log-weights. NaN entries count as -inf.
struct Weights {
  Vec logw;
  Vec normalized;
  double log_sum = 0.0;  // log of sum exp(logw)

  static Weights from_log(std::span<const double> logw);
};

// log( (1/n) sum exp(v_i) ); -inf if every entry is -inf.
double log_mean_exp(std::span<const double> v);

double ess(const Weights& w);
double ess_from_log(std::span<const double> logw);

// iid draws, returned in increasing order (which is harmless for exchangeable
// particles and lets the draw run in O(N + N_out)).
Indices resample_multinomial(const Weights& w, std::size_t n_out, Engine& eng);
Indices resample_systematic(const Weights& w, std::size_t n_out, Engine& eng);

// Total number of transition draws made by particle filters in this process.
// Used to check the cost bound of the windowed sampler.
std::uint64_t transition_draws();
void count_transition_draws(std::size_t n);

struct PFState {
  Vec theta;
  std::size_t n_x = 0;
  std::size_t dim_state = 1;
  Vec particles;  // n_x * dim_state, current x_k
  Vec log_g;      // log g(y_k | x_k^i); empty before the first absorption
  Vec step_logpotentials;
  double cum_loglik = 0.0;

  // Optional history of the window: ancestor vectors and particle snapshots,
  // capped at max_history steps (0 means unbounded).
  bool keep_history = false;
  std::size_t max_history = 0;
  std::deque<Indices> ancestors;
  std::deque<Vec> paths;

  std::size_t absorbed() const { return step_logpotentials.size(); }
  std::span<const double> particle(std::size_t i) const {
    return std::span<const double>(particles).subspan(i * dim_state, dim_state);
  }
};

struct PFOptions {
  bool keep_history = false;
  std::size_t max_history = 0;
};

// Particles iid from the initial law. With y_first the cloud is moved one
// step (x_1 ~ f(.|x_0)) and y_first is absorbed as the observation of x_1.
PFState pf_init(const StateSpaceModel& model, std::span<const double> theta,
                std::size_t n_x, std::optional<double> y_first, Engine& eng,
                PFOptions opts = {});

// Starts a filter from given particles, which are taken to be at the time of y.
PFState pf_start(const StateSpaceModel& model, std::span<const double> theta,
                 Vec particles, double y, PFOptions opts = {});

// Multinomial ancestors with probabilities prop. to exp(log_g), then one
// transition per particle. No potential is recorded.
void pf_extend(PFState& state, const StateSpaceModel& model, Engine& eng);

// Records log of the mean observation density of the current cloud.
void pf_absorb(PFState& state, const StateSpaceModel& model, double y);

void pf_step(PFState& state, const StateSpaceModel& model, double y, Engine& eng);

// Mean of each state coordinate under the weights g(y_k|x_k^i).
Vec pf_filtered_mean(const PFState& state);

}  // namespace smc2fw
