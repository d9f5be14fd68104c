#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>

namespace smc2fw {

using Engine = std::mt19937_64;

// Purpose tags keep the streams of different algorithm stages disjoint.
enum class StreamTag : std::uint64_t {
  init = 1,
  step = 2,
  resample = 3,
  pmmh = 4,
  terminal = 5,
  extract = 6,
  predict = 7,
  simulate = 8,
  test = 99,
};

// Counter-based stream derivation: the engine for a given (seed, tag, keys...)
// is a pure function of its arguments, so results never depend on which
// worker runs a task or in what order.
Engine stream(std::uint64_t seed, StreamTag tag,
              std::initializer_list<std::uint64_t> keys = {});

inline double standard_normal(Engine& eng) {
  return std::normal_distribution<double>(0.0, 1.0)(eng);
}

inline double uniform01(Engine& eng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(eng);
}

// Number of workers, read from SMC2FW_WORKERS (default: hardware threads).
std::size_t worker_count();

// Runs body(i) for i in [0, n). Chunks are contiguous and static. The first
// exception raised by any worker is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace smc2fw
