#include "smc2fw/smc2fw.hpp"

#include <chrono>
#include <stdexcept>

namespace smc2fw {
namespace {

PFOptions window_options(const BlockConfig& cfg) {
  PFOptions o = cfg.smc.pf;
  o.max_history = cfg.window;
  return o;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

void BlockConfig::validate() const {
  if (window < 2) throw std::invalid_argument("window length must be at least 2");
  if (!bandwidth_rule_a3 && !(bandwidth > 0.0)) {
    throw std::invalid_argument("bandwidth must be positive");
  }
  smc.validate();
}

double BlockConfig::bandwidth_for(std::size_t n, std::size_t d) const {
  return bandwidth_rule_a3 ? smc2fw::bandwidth_rule_a3(n, d) : bandwidth;
}

FwState fw_begin(const StateSpaceModel& model, std::span<const double> y,
                 const BlockConfig& cfg) {
  cfg.validate();
  if (y.empty()) throw std::invalid_argument("no observations");
  FwState s{1, ParticleLikelihood(model, y, cfg.smc.n_x, window_options(cfg)), {}, nullptr, {}};
  s.within = smc2_start(s.lik, cfg.smc, 1, 1);
  return s;
}

void terminal_resample(FwState& state, const BlockConfig& cfg) {
  auto& st = state.within;
  const Weights w = Weights::from_log(st.logw);
  Engine eng = stream(cfg.smc.seed, StreamTag::terminal, {st.time});
  const Indices idx = resample_systematic(w, st.size(), eng);
  std::vector<ThetaParticle<PFState>> next;
  next.reserve(st.size());
  for (std::size_t i : idx) next.push_back(st.particles[i]);
  st.particles = std::move(next);
  std::fill(st.logw.begin(), st.logw.end(), 0.0);
  st.last_ess = static_cast<double>(st.size());
}

KdeBridge extract_bridge(const FwState& state, const BlockConfig& cfg) {
  const auto& st = state.within;
  KdeBridge b;
  b.n = st.size();
  b.dim_theta = state.lik.dim_theta();
  b.dim_state = state.lik.dim_state();
  b.h = cfg.bandwidth_for(b.n, b.dim_theta);
  b.u.resize(b.n * b.dim_theta);
  b.x.resize(b.n * b.dim_state);
  for (std::size_t j = 0; j < b.n; ++j) {
    const auto& p = st.particles[j];
    Engine eng = stream(cfg.smc.seed, StreamTag::extract, {st.time, j});
    const std::size_t k = resample_multinomial(Weights::from_log(p.tracker.log_g), 1, eng)[0];
    std::copy(p.u.begin(), p.u.end(), b.u.begin() + static_cast<long>(j * b.dim_theta));
    const auto xk = p.tracker.particle(k);
    std::copy(xk.begin(), xk.end(), b.x.begin() + static_cast<long>(j * b.dim_state));
  }
  b.validate();
  return b;
}

void init_block(FwState& state, std::shared_ptr<const KdeBridge> bridge,
                const BlockConfig& cfg) {
  const std::size_t start = state.block * cfg.window + 1;
  if (start > state.lik.data().size()) throw std::out_of_range("no data for the next block");
  state.block += 1;
  state.bridge = std::move(bridge);
  state.lik.use_bridge(state.bridge, cfg.coupling);
  const PmmhProposal keep = state.within.proposal;
  state.within = smc2_start(state.lik, cfg.smc, start, state.block);
  // Proposal scales carry over; the first rejuvenation re-adapts them anyway.
  state.within.proposal = keep;
  state.per_step_cost.clear();
}

bool fw_advance(FwState& state, const BlockConfig& cfg) {
  if (state.at_block_end(cfg.window)) {
    terminal_resample(state, cfg);
    auto bridge = std::make_shared<const KdeBridge>(extract_bridge(state, cfg));
    init_block(state, std::move(bridge), cfg);
    return true;
  }
  smc2_advance(state.within, state.lik, cfg.smc);
  return false;
}

std::optional<double> fw_maybe_rejuvenate(FwState& state, const BlockConfig& cfg) {
  return smc2_maybe_rejuvenate(state.within, state.lik, cfg.smc);
}

StepRecord fw_summarize(const FwState& state, const BlockConfig& cfg) {
  StepRecord r = summarize(state.within, state.lik, cfg.smc);
  r.block = state.block;
  return r;
}

namespace {

void finish_step(FwState& s, const BlockConfig& cfg, std::chrono::steady_clock::time_point t0,
                 const RecordSink& sink) {
  StepRecord r = fw_summarize(s, cfg);
  if (auto acc = fw_maybe_rejuvenate(s, cfg)) {
    r.rejuvenated = true;
    r.acceptance = *acc;
  }
  r.wall_ms = ms_since(t0);
  s.per_step_cost.push_back(r.wall_ms);
  if (sink) sink(r);
}

}  // namespace

std::pair<FwState, KdeBridge> run_first_block(const StateSpaceModel& model,
                                              std::span<const double> y,
                                              const BlockConfig& cfg, const RecordSink& sink) {
  if (y.size() < cfg.window) throw std::invalid_argument("first block needs T observations");
  auto t0 = std::chrono::steady_clock::now();
  FwState s = fw_begin(model, y, cfg);
  finish_step(s, cfg, t0, sink);
  while (s.time() < cfg.window) {
    t0 = std::chrono::steady_clock::now();
    fw_advance(s, cfg);
    finish_step(s, cfg, t0, sink);
  }
  terminal_resample(s, cfg);
  KdeBridge b = extract_bridge(s, cfg);
  return {std::move(s), std::move(b)};
}

FwState run_online(const StateSpaceModel& model, std::span<const double> y,
                   std::size_t n_steps, const BlockConfig& cfg, const RecordSink& sink) {
  if (n_steps == 0 || n_steps > y.size()) {
    throw std::invalid_argument("n_steps must be in [1, data length]");
  }
  auto t0 = std::chrono::steady_clock::now();
  FwState s = fw_begin(model, y, cfg);
  finish_step(s, cfg, t0, sink);
  while (s.time() < n_steps) {
    t0 = std::chrono::steady_clock::now();
    fw_advance(s, cfg);
    finish_step(s, cfg, t0, sink);
  }
  return s;
}

}  // namespace smc2fw
