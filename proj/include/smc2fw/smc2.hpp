#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smc2fw/errors.hpp"
#include "smc2fw/kalman.hpp"
#include "smc2fw/kde.hpp"
#include "smc2fw/models.hpp"
#include "smc2fw/particle.hpp"
#include "smc2fw/random.hpp"

namespace smc2fw {

// Random-walk Metropolis proposal on u = log(theta). scales has one entry
// per theta coordinate; blocks partition the coordinates.
struct PmmhProposal {
  Blocks blocks;
  Vec scales;
  bool adapt = true;

  void validate(std::size_t dim_theta) const;
};

struct Smc2Config {
  std::size_t n_theta = 200;
  std::size_t n_x = 100;
  double ess_threshold = 0.5;
  std::size_t pmmh_sweeps = 1;
  bool resample_every_step = false;
  bool adapt = true;
  double initial_scale = 0.1;
  std::size_t predict_samples = 0;  // m; 0 turns prediction off
  std::uint64_t seed = 1;
  PFOptions pf;

  void validate() const;
};

struct RejuvenationRecord {
  std::size_t time = 0;
  double acceptance = 0.0;
  double wall_ms = 0.0;
};

struct StepRecord {
  std::size_t time = 0;
  std::size_t block = 1;
  Vec theta_mean;
  Vec theta_sd;
  Vec state_mean;
  Vec prediction;  // E[X_{n+1} | y_1..n]; empty when off
  double ess = 0.0;
  double log_evidence_increment = 0.0;
  bool rejuvenated = false;
  double acceptance = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
};

using RecordSink = std::function<void(const StepRecord&)>;

template <class Tracker>
struct ThetaParticle {
  Vec u;
  Vec theta;
  Tracker tracker;
  double log_extra = 0.0;  // log prior(u) or log bridge density of u
};

template <class Tracker>
struct Smc2State {
  std::vector<ThetaParticle<Tracker>> particles;
  Vec logw;
  std::size_t time = 0;
  std::size_t window_start = 1;
  double log_evidence = 0.0;
  double last_increment = 0.0;
  double last_ess = 0.0;
  PmmhProposal proposal;
  std::vector<RejuvenationRecord> rejuvenation_log;

  std::size_t size() const { return particles.size(); }
};

// ---------------------------------------------------------------------------
// Likelihood back-ends. A back-end owns the data and knows how to start,
// advance and rerun the per-theta tracker, and what the theta-target factor
// is (prior, or the bridge density in a later block).

class ParticleLikelihood {
 public:
  using Tracker = PFState;

  ParticleLikelihood(const StateSpaceModel& model, std::span<const double> y,
                     std::size_t n_x, PFOptions opts = {})
      : model_(&model), y_(y), n_x_(n_x), opts_(opts) {}

  void use_prior() { bridge_.reset(); }
  void use_bridge(std::shared_ptr<const KdeBridge> bridge, BridgeCoupling coupling) {
    bridge_ = std::move(bridge);
    coupling_ = coupling;
  }
  // Degenerate prior at theta (only for checks against exact likelihoods).
  void fix_theta(Vec theta) { point_mass_ = ThetaTransform::to_unconstrained(theta); }

  const StateSpaceModel& model() const { return *model_; }
  std::span<const double> data() const { return y_; }
  std::size_t dim_theta() const { return model_->dim_theta(); }
  std::size_t dim_state() const { return model_->dim_state(); }
  std::size_t n_x() const { return n_x_; }
  bool bridged() const { return static_cast<bool>(bridge_); }
  const KdeBridge* bridge() const { return bridge_.get(); }
  BridgeCoupling coupling() const { return coupling_; }

  Vec sample_u(Engine& eng) const {
    if (point_mass_) return *point_mass_;
    if (bridge_) return kde_sample_theta(*bridge_, eng).u;
    return ThetaTransform::to_unconstrained(model_->prior_sample(eng));
  }

  double log_extra(std::span<const double> u) const {
    if (point_mass_) {
      return std::equal(u.begin(), u.end(), point_mass_->begin())
                 ? 0.0
                 : -std::numeric_limits<double>::infinity();
    }
    if (bridge_) {
      const double c = kde_marginal_logdensity(*bridge_, u);
      return coupling_ == BridgeCoupling::product ? static_cast<double>(n_x_) * c : c;
    }
    return model_->prior_logdensity_unconstrained(u);
  }

  Tracker start(std::span<const double> theta, std::span<const double> u,
                std::size_t window_start, Engine& eng) const {
    const double y = y_[window_start - 1];
    if (bridge_) {
      Vec xs = bridge_sample_states(*bridge_, theta, u, *model_, n_x_, coupling_, eng);
      return pf_start(*model_, theta, std::move(xs), y, opts_);
    }
    return pf_init(*model_, theta, n_x_, y, eng, opts_);
  }

  void advance(Tracker& t, std::size_t n, Engine& eng) const {
    // A zero likelihood estimate stays zero. Move without selection so the
    // theta-particle just keeps zero weight instead of aborting the run.
    if (t.cum_loglik == -std::numeric_limits<double>::infinity()) t.log_g.clear();
    pf_step(t, *model_, y_[n - 1], eng);
  }

  double last_logpotential(const Tracker& t) const { return t.step_logpotentials.back(); }
  double loglik(const Tracker& t) const { return t.cum_loglik; }
  Vec state_mean(const Tracker& t) const { return pf_filtered_mean(t); }

  // Mean of X_{n+1} from m inner particles picked by weight and moved once.
  Vec predict(const Tracker& t, std::size_t m, Engine& eng) const {
    const std::size_t ds = t.dim_state;
    const Indices anc = resample_multinomial(Weights::from_log(t.log_g), m, eng);
    Vec next(m * ds);
    model_->transition_batch(t.theta, t.particles, anc, next, eng);
    Vec mean(ds, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t d = 0; d < ds; ++d) mean[d] += next[i * ds + d];
    }
    for (auto& v : mean) v /= static_cast<double>(m);
    return mean;
  }

 private:
  const StateSpaceModel* model_;
  std::span<const double> y_;
  std::size_t n_x_;
  PFOptions opts_;
  std::shared_ptr<const KdeBridge> bridge_;
  BridgeCoupling coupling_ = BridgeCoupling::conditional;
  std::optional<Vec> point_mass_;
};

// Exact likelihood through the Kalman filter (Gaussian random walk model only).
class KalmanLikelihood {
 public:
  using Tracker = KalmanState;

  KalmanLikelihood(const LinearGaussianModel& model, std::span<const double> y)
      : model_(&model), y_(y) {}

  void fix_theta(Vec theta) { point_mass_ = ThetaTransform::to_unconstrained(theta); }

  const StateSpaceModel& model() const { return *model_; }
  std::span<const double> data() const { return y_; }
  std::size_t dim_theta() const { return model_->dim_theta(); }
  std::size_t dim_state() const { return 1; }
  bool bridged() const { return false; }

  Vec sample_u(Engine& eng) const {
    if (point_mass_) return *point_mass_;
    return ThetaTransform::to_unconstrained(model_->prior_sample(eng));
  }

  double log_extra(std::span<const double> u) const {
    if (point_mass_) {
      return std::equal(u.begin(), u.end(), point_mass_->begin())
                 ? 0.0
                 : -std::numeric_limits<double>::infinity();
    }
    return model_->prior_logdensity_unconstrained(u);
  }

  Tracker start(std::span<const double> theta, std::span<const double>,
                std::size_t window_start, Engine&) const {
    const auto p = model_->params_at(theta);
    return kalman_step(kalman_init(p), p, y_[window_start - 1]);
  }

  // KalmanState does not carry theta, so the caller passes it.
  void advance_at(Tracker& t, std::span<const double> theta, std::size_t n) const {
    t = kalman_step(t, model_->params_at(theta), y_[n - 1]);
  }

  double last_logpotential(const Tracker& t) const { return t.last_increment; }
  double loglik(const Tracker& t) const { return t.cum_loglik; }
  Vec state_mean(const Tracker& t) const { return {t.mean}; }
  Vec predict(const Tracker& t, std::size_t, Engine&) const { return {t.mean}; }

 private:
  const LinearGaussianModel* model_;
  std::span<const double> y_;
  std::optional<Vec> point_mass_;
};

namespace detail {

inline void advance_tracker(const ParticleLikelihood& lik, PFState& t,
                            std::span<const double>, std::size_t n, Engine& eng) {
  lik.advance(t, n, eng);
}

inline void advance_tracker(const KalmanLikelihood& lik, KalmanState& t,
                            std::span<const double> theta, std::size_t n, Engine&) {
  lik.advance_at(t, theta, n);
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace detail

// Weighted per-coordinate sd of u; 2.38/sqrt(block dim) times it, floored.
// Keeps the old scales when fewer than two distinct particles carry weight.
template <class Tracker>
PmmhProposal adapt_proposal(const Smc2State<Tracker>& state, const Weights& w) {
  PmmhProposal out = state.proposal;
  const std::size_t n = state.size();
  if (n == 0) return out;
  const std::size_t d = state.particles[0].u.size();
  bool distinct = false;
  const Vec* first = nullptr;
  for (std::size_t i = 0; i < n && !distinct; ++i) {
    if (w.normalized[i] <= 0.0) continue;
    if (!first) {
      first = &state.particles[i].u;
    } else if (state.particles[i].u != *first) {
      distinct = true;
    }
  }
  if (!distinct) return out;
  Vec sd(d);
  for (std::size_t k = 0; k < d; ++k) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += w.normalized[i] * state.particles[i].u[k];
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = state.particles[i].u[k] - m;
      v += w.normalized[i] * z * z;
    }
    sd[k] = std::sqrt(v);
  }
  for (const auto& block : out.blocks) {
    const double f = 2.38 / std::sqrt(static_cast<double>(block.size()));
    for (std::size_t k : block) out.scales[k] = std::max(f * sd[k], 1e-3);
  }
  return out;
}

template <class Tracker>
PmmhProposal adapt_proposal(const Smc2State<Tracker>& state) {
  return adapt_proposal(state, Weights::from_log(state.logw));
}

// One PMMH pass per block, repeated `sweeps` times. The window is
// [window_start, time]; the tracker is rebuilt from scratch for each proposal
// and the stored likelihood of the current point is reused. Returns the
// number of accepted proposals.
template <class Lik>
std::size_t pmmh_kernel(ThetaParticle<typename Lik::Tracker>& p, const Lik& lik,
                        const PmmhProposal& proposal, std::size_t sweeps,
                        std::size_t window_start, std::size_t time, Engine& eng) {
  std::size_t accepted = 0;
  for (std::size_t s = 0; s < sweeps; ++s) {
    for (const auto& block : proposal.blocks) {
      Vec u_new = p.u;
      for (std::size_t k : block) u_new[k] += proposal.scales[k] * standard_normal(eng);
      const double log_u = std::log(uniform01(eng));
      const double extra = lik.log_extra(u_new);
      if (!std::isfinite(extra)) continue;
      Vec theta_new = ThetaTransform::to_natural(u_new);
      bool finite = true;
      for (double v : theta_new) finite = finite && std::isfinite(v) && v > 0.0;
      if (!finite) continue;
      auto tr = lik.start(theta_new, u_new, window_start, eng);
      for (std::size_t n = window_start + 1; n <= time; ++n) {
        detail::advance_tracker(lik, tr, theta_new, n, eng);
      }
      const double ratio = extra + lik.loglik(tr) - p.log_extra - lik.loglik(p.tracker);
      if (std::isnan(ratio)) continue;
      if (log_u < ratio) {
        p.u = std::move(u_new);
        p.theta = std::move(theta_new);
        p.tracker = std::move(tr);
        p.log_extra = extra;
        ++accepted;
      }
    }
  }
  return accepted;
}

// Draws the cloud and absorbs y at window_start. No rejuvenation.
// `epoch` separates the random streams of successive blocks.
template <class Lik>
Smc2State<typename Lik::Tracker> smc2_start(const Lik& lik, const Smc2Config& cfg,
                                            std::size_t window_start, std::uint64_t epoch) {
  cfg.validate();
  using Tracker = typename Lik::Tracker;
  Smc2State<Tracker> st;
  const std::size_t n = cfg.n_theta;
  st.particles.resize(n);
  st.logw.assign(n, 0.0);
  st.time = window_start;
  st.window_start = window_start;
  parallel_for(n, [&](std::size_t i) {
    Engine eng = stream(cfg.seed, StreamTag::init, {epoch, i});
    auto& p = st.particles[i];
    p.u = lik.sample_u(eng);
    p.theta = ThetaTransform::to_natural(p.u);
    p.log_extra = lik.log_extra(p.u);
    p.tracker = lik.start(p.theta, p.u, window_start, eng);
  });
  for (std::size_t i = 0; i < n; ++i) st.logw[i] = lik.last_logpotential(st.particles[i].tracker);
  st.last_increment = log_mean_exp(st.logw);
  st.log_evidence = st.last_increment;
  st.last_ess = ess_from_log(st.logw);
  st.proposal.blocks = lik.model().default_blocks();
  st.proposal.scales.assign(lik.dim_theta(), cfg.initial_scale);
  st.proposal.adapt = cfg.adapt;
  return st;
}

// Moves every tracker to time+1 and reweights. No rejuvenation.
template <class Lik>
void smc2_advance(Smc2State<typename Lik::Tracker>& st, const Lik& lik, const Smc2Config& cfg) {
  const std::size_t n = st.time + 1;
  if (n > lik.data().size()) throw std::out_of_range("no observation left");
  parallel_for(st.size(), [&](std::size_t i) {
    Engine eng = stream(cfg.seed, StreamTag::step, {n, i});
    auto& p = st.particles[i];
    detail::advance_tracker(lik, p.tracker, p.theta, n, eng);
  });
  const double before = log_mean_exp(st.logw);
  Vec lw(st.size());
  for (std::size_t i = 0; i < st.size(); ++i) {
    lw[i] = st.logw[i] + lik.last_logpotential(st.particles[i].tracker);
  }
  const double after = log_mean_exp(lw);
  if (after == -std::numeric_limits<double>::infinity() || std::isnan(after)) {
    throw DegenerateWeightsError("every theta-particle has zero weight at time " +
                                 std::to_string(n));
  }
  st.logw = std::move(lw);
  st.time = n;
  st.last_increment = after - before;
  st.log_evidence += st.last_increment;
  st.last_ess = ess_from_log(st.logw);
}

// Systematic resampling of the cloud followed by PMMH on every particle.
// Returns the acceptance rate.
template <class Lik>
double smc2_rejuvenate(Smc2State<typename Lik::Tracker>& st, const Lik& lik,
                       const Smc2Config& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const Weights w = Weights::from_log(st.logw);
  if (st.proposal.adapt) st.proposal = adapt_proposal(st, w);
  Engine reng = stream(cfg.seed, StreamTag::resample, {st.time});
  const Indices idx = resample_systematic(w, st.size(), reng);
  std::vector<ThetaParticle<typename Lik::Tracker>> next;
  next.reserve(st.size());
  for (std::size_t i : idx) next.push_back(st.particles[i]);
  st.particles = std::move(next);
  std::fill(st.logw.begin(), st.logw.end(), 0.0);

  std::vector<std::size_t> acc(st.size(), 0);
  parallel_for(st.size(), [&](std::size_t i) {
    Engine eng = stream(cfg.seed, StreamTag::pmmh, {st.time, i});
    acc[i] = pmmh_kernel(st.particles[i], lik, st.proposal, cfg.pmmh_sweeps,
                         st.window_start, st.time, eng);
  });
  std::size_t total = 0;
  for (auto a : acc) total += a;
  const double moves =
      static_cast<double>(st.size() * cfg.pmmh_sweeps * st.proposal.blocks.size());
  const double rate = moves > 0 ? static_cast<double>(total) / moves : 0.0;
  st.rejuvenation_log.push_back({st.time, rate, detail::ms_since(t0)});
  return rate;
}

template <class Tracker>
bool needs_rejuvenation(const Smc2State<Tracker>& st, const Smc2Config& cfg) {
  return cfg.resample_every_step ||
         st.last_ess < cfg.ess_threshold * static_cast<double>(st.size());
}

template <class Lik>
std::optional<double> smc2_maybe_rejuvenate(Smc2State<typename Lik::Tracker>& st,
                                            const Lik& lik, const Smc2Config& cfg) {
  if (!needs_rejuvenation(st, cfg)) return std::nullopt;
  return smc2_rejuvenate(st, lik, cfg);
}

template <class Lik>
Smc2State<typename Lik::Tracker> smc2_init(const Lik& lik, const Smc2Config& cfg) {
  auto st = smc2_start(lik, cfg, 1, 1);
  smc2_maybe_rejuvenate(st, lik, cfg);
  return st;
}

template <class Lik>
void smc2_step(Smc2State<typename Lik::Tracker>& st, const Lik& lik, const Smc2Config& cfg) {
  smc2_advance(st, lik, cfg);
  smc2_maybe_rejuvenate(st, lik, cfg);
}

// Weighted mean of phi over the cloud. Outer weights already carry the
// latest potential, so this is the potential-weighted estimator.
template <class Tracker, class F>
double estimate(const Smc2State<Tracker>& st, F&& phi) {
  const Weights w = Weights::from_log(st.logw);
  double s = 0.0;
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (w.normalized[i] > 0.0) s += w.normalized[i] * phi(st.particles[i]);
  }
  return s;
}

template <class Lik>
StepRecord summarize(const Smc2State<typename Lik::Tracker>& st, const Lik& lik,
                     const Smc2Config& cfg) {
  const Weights w = Weights::from_log(st.logw);
  const std::size_t d = lik.dim_theta();
  const std::size_t ds = lik.dim_state();
  StepRecord r;
  r.time = st.time;
  r.theta_mean.assign(d, 0.0);
  r.theta_sd.assign(d, 0.0);
  r.state_mean.assign(ds, 0.0);
  for (std::size_t i = 0; i < st.size(); ++i) {
    const double wi = w.normalized[i];
    if (wi <= 0.0) continue;
    for (std::size_t k = 0; k < d; ++k) r.theta_mean[k] += wi * st.particles[i].theta[k];
    const Vec xm = lik.state_mean(st.particles[i].tracker);
    for (std::size_t k = 0; k < ds; ++k) r.state_mean[k] += wi * xm[k];
  }
  for (std::size_t i = 0; i < st.size(); ++i) {
    const double wi = w.normalized[i];
    for (std::size_t k = 0; k < d; ++k) {
      const double z = st.particles[i].theta[k] - r.theta_mean[k];
      r.theta_sd[k] += wi * z * z;
    }
  }
  for (auto& v : r.theta_sd) v = std::sqrt(v);
  if (cfg.predict_samples > 0) {
    std::vector<Vec> pred(st.size());
    parallel_for(st.size(), [&](std::size_t i) {
      if (w.normalized[i] <= 0.0) return;
      Engine eng = stream(cfg.seed, StreamTag::predict, {st.time, i});
      pred[i] = lik.predict(st.particles[i].tracker, cfg.predict_samples, eng);
    });
    r.prediction.assign(ds, 0.0);
    for (std::size_t i = 0; i < st.size(); ++i) {
      if (w.normalized[i] <= 0.0) continue;
      for (std::size_t k = 0; k < ds; ++k) r.prediction[k] += w.normalized[i] * pred[i][k];
    }
  }
  r.ess = st.last_ess;
  r.log_evidence_increment = st.last_increment;
  return r;
}

// Full SMC2 (or IBIS with KalmanLikelihood) over the first n_steps
// observations, one record per step.
template <class Lik>
Smc2State<typename Lik::Tracker> run_smc2(const Lik& lik, std::size_t n_steps,
                                          const Smc2Config& cfg, const RecordSink& sink) {
  if (n_steps == 0 || n_steps > lik.data().size()) {
    throw std::invalid_argument("n_steps must be in [1, data length]");
  }
  auto t0 = std::chrono::steady_clock::now();
  auto st = smc2_start(lik, cfg, 1, 1);
  auto finish = [&](StepRecord r) {
    if (auto acc = smc2_maybe_rejuvenate(st, lik, cfg)) {
      r.rejuvenated = true;
      r.acceptance = *acc;
    }
    r.wall_ms = detail::ms_since(t0);
    if (sink) sink(r);
  };
  finish(summarize(st, lik, cfg));
  for (std::size_t n = 2; n <= n_steps; ++n) {
    t0 = std::chrono::steady_clock::now();
    smc2_advance(st, lik, cfg);
    finish(summarize(st, lik, cfg));
  }
  return st;
}

}  // namespace smc2fw
