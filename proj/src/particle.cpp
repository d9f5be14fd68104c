#include "smc2fw/particle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "smc2fw/errors.hpp"

namespace smc2fw {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
std::atomic<std::uint64_t> g_transition_draws{0};

void push_history(PFState& s, Indices anc) {
  if (!s.keep_history) return;
  s.ancestors.push_back(std::move(anc));
  s.paths.push_back(s.particles);
  if (s.max_history > 0) {
    while (s.ancestors.size() > s.max_history) {
      s.ancestors.pop_front();
      s.paths.pop_front();
    }
  }
}

}  // namespace

Weights Weights::from_log(std::span<const double> logw) {
  Weights w;
  w.logw.assign(logw.begin(), logw.end());
  double mx = kNegInf;
  for (auto& v : w.logw) {
    if (std::isnan(v)) v = kNegInf;
    mx = std::max(mx, v);
  }
  if (w.logw.empty() || mx == kNegInf) {
    throw DegenerateWeightsError("all weights are zero");
  }
  if (mx == std::numeric_limits<double>::infinity()) {
    throw DegenerateWeightsError("infinite weight");
  }
  w.normalized.resize(w.logw.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.logw.size(); ++i) {
    w.normalized[i] = std::exp(w.logw[i] - mx);
    sum += w.normalized[i];
  }
  for (auto& v : w.normalized) v /= sum;
  w.log_sum = mx + std::log(sum);
  return w;
}

double log_mean_exp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf || std::isnan(mx)) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s / static_cast<double>(v.size()));
}

double ess(const Weights& w) {
  double s = 0.0;
  for (double p : w.normalized) s += p * p;
  return 1.0 / s;
}

double ess_from_log(std::span<const double> logw) { return ess(Weights::from_log(logw)); }

Indices resample_multinomial(const Weights& w, std::size_t n_out, Engine& eng) {
  // Sorted uniforms from normalized exponential spacings.
  std::exponential_distribution<double> expo(1.0);
  Vec cum(n_out + 1);
  double acc = 0.0;
  for (auto& c : cum) {
    acc += expo(eng);
    c = acc;
  }
  Indices out(n_out);
  const std::size_t n = w.normalized.size();
  std::size_t j = 0;
  double csum = w.normalized[0];
  for (std::size_t k = 0; k < n_out; ++k) {
    const double u = cum[k] / acc;
    while (u > csum && j + 1 < n) csum += w.normalized[++j];
    out[k] = j;
  }
  return out;
}

Indices resample_systematic(const Weights& w, std::size_t n_out, Engine& eng) {
  Indices out(n_out);
  const std::size_t n = w.normalized.size();
  const double u0 = uniform01(eng);
  std::size_t j = 0;
  double csum = w.normalized[0] * static_cast<double>(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double u = static_cast<double>(k) + u0;
    while (u > csum && j + 1 < n) csum += w.normalized[++j] * static_cast<double>(n_out);
    out[k] = j;
  }
  return out;
}

void count_transition_draws(std::size_t n) {
  g_transition_draws.fetch_add(n, std::memory_order_relaxed);
}

std::uint64_t transition_draws() { return g_transition_draws.load(std::memory_order_relaxed); }

PFState pf_init(const StateSpaceModel& model, std::span<const double> theta, std::size_t n_x,
                std::optional<double> y_first, Engine& eng, PFOptions opts) {
  if (n_x == 0) throw std::invalid_argument("n_x must be at least 1");
  PFState s;
  s.theta.assign(theta.begin(), theta.end());
  s.n_x = n_x;
  s.dim_state = model.dim_state();
  s.keep_history = opts.keep_history;
  s.max_history = opts.max_history;
  Vec x0(n_x * s.dim_state);
  std::span<double> xs(x0);
  for (std::size_t i = 0; i < n_x; ++i) {
    model.init_sample(theta, xs.subspan(i * s.dim_state, s.dim_state), eng);
  }
  if (!y_first) {
    s.particles = std::move(x0);
    return s;
  }
  // x_0 is iid, so moving particle i from x_0^i has the multinomial law.
  Indices anc(n_x);
  std::iota(anc.begin(), anc.end(), 0);
  s.particles.resize(x0.size());
  model.transition_batch(theta, x0, anc, s.particles, eng);
  count_transition_draws(n_x);
  push_history(s, std::move(anc));
  pf_absorb(s, model, *y_first);
  return s;
}

PFState pf_start(const StateSpaceModel& model, std::span<const double> theta, Vec particles,
                 double y, PFOptions opts) {
  PFState s;
  s.theta.assign(theta.begin(), theta.end());
  s.dim_state = model.dim_state();
  s.n_x = particles.size() / s.dim_state;
  if (s.n_x == 0) throw std::invalid_argument("pf_start needs at least one particle");
  s.particles = std::move(particles);
  s.keep_history = opts.keep_history;
  s.max_history = opts.max_history;
  if (s.keep_history) {
    Indices anc(s.n_x);
    std::iota(anc.begin(), anc.end(), 0);
    push_history(s, std::move(anc));
  }
  pf_absorb(s, model, y);
  return s;
}

void pf_extend(PFState& state, const StateSpaceModel& model, Engine& eng) {
  Indices anc;
  if (state.log_g.empty()) {
    anc.resize(state.n_x);
    std::iota(anc.begin(), anc.end(), 0);
  } else {
    anc = resample_multinomial(Weights::from_log(state.log_g), state.n_x, eng);
  }
  Vec next(state.particles.size());
  model.transition_batch(state.theta, state.particles, anc, next, eng);
  count_transition_draws(state.n_x);
  state.particles = std::move(next);
  state.log_g.clear();
  push_history(state, std::move(anc));
}

void pf_absorb(PFState& state, const StateSpaceModel& model, double y) {
  state.log_g.resize(state.n_x);
  model.obs_logdensity_batch(state.theta, state.particles, y, state.log_g);
  const double lp = log_mean_exp(state.log_g);
  state.step_logpotentials.push_back(lp);
  state.cum_loglik += lp;
}

void pf_step(PFState& state, const StateSpaceModel& model, double y, Engine& eng) {
  pf_extend(state, model, eng);
  pf_absorb(state, model, y);
}

Vec pf_filtered_mean(const PFState& state) {
  Vec mean(state.dim_state, 0.0);
  if (state.log_g.empty()) {
    for (std::size_t i = 0; i < state.n_x; ++i) {
      for (std::size_t d = 0; d < state.dim_state; ++d) {
        mean[d] += state.particles[i * state.dim_state + d];
      }
    }
    for (auto& m : mean) m /= static_cast<double>(state.n_x);
    return mean;
  }
  const Weights w = Weights::from_log(state.log_g);
  for (std::size_t i = 0; i < state.n_x; ++i) {
    for (std::size_t d = 0; d < state.dim_state; ++d) {
      mean[d] += w.normalized[i] * state.particles[i * state.dim_state + d];
    }
  }
  return mean;
}

}  // namespace smc2fw
