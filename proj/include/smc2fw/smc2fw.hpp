#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <utility>

#include "smc2fw/kde.hpp"
#include "smc2fw/models.hpp"
#include "smc2fw/particle.hpp"
#include "smc2fw/smc2.hpp"

namespace smc2fw {

struct BlockConfig {
  std::size_t window = 125;  // T
  double bandwidth = 0.01;
  bool bandwidth_rule_a3 = false;
  BridgeCoupling coupling = BridgeCoupling::conditional;
  Smc2Config smc;

  void validate() const;
  double bandwidth_for(std::size_t n, std::size_t d) const;
};

struct FwState {
  std::size_t block = 1;
  ParticleLikelihood lik;
  Smc2State<PFState> within;
  std::shared_ptr<const KdeBridge> bridge;  // built from block - 1; null in block 1
  Vec per_step_cost;                        // wall ms, current block only

  std::size_t time() const { return within.time; }
  bool at_block_end(std::size_t window) const { return within.time % window == 0; }
};

// Block 1 at time 1: cloud from the prior, y_1 absorbed. No rejuvenation yet.
FwState fw_begin(const StateSpaceModel& model, std::span<const double> y,
                 const BlockConfig& cfg);

// Systematic resampling of the theta-particles prop. to their weights (which
// include the last potential), after which all weights are equal.
void terminal_resample(FwState& state, const BlockConfig& cfg);

// One pair per theta-particle: (log theta, one inner particle drawn prop. to
// g(y_bT | x)). Expects terminal_resample to have run.
KdeBridge extract_bridge(const FwState& state, const BlockConfig& cfg);

// Starts block b = state.block + 1 from the bridge at time bT + 1.
void init_block(FwState& state, std::shared_ptr<const KdeBridge> bridge,
                const BlockConfig& cfg);

// Moves to time + 1. Crossing a block boundary runs terminal resampling,
// extraction and init_block. Returns true when a new block was started.
bool fw_advance(FwState& state, const BlockConfig& cfg);

// ESS-triggered resample + windowed PMMH.
std::optional<double> fw_maybe_rejuvenate(FwState& state, const BlockConfig& cfg);

std::pair<FwState, KdeBridge> run_first_block(const StateSpaceModel& model,
                                              std::span<const double> y,
                                              const BlockConfig& cfg,
                                              const RecordSink& sink = {});

StepRecord fw_summarize(const FwState& state, const BlockConfig& cfg);

FwState run_online(const StateSpaceModel& model, std::span<const double> y,
                   std::size_t n_steps, const BlockConfig& cfg, const RecordSink& sink);

}  // namespace smc2fw
