#include "smc2fw/smc2.hpp"

#include <stdexcept>
#include <vector>

namespace smc2fw {

void PmmhProposal::validate(std::size_t dim_theta) const {
  if (scales.size() != dim_theta) throw std::invalid_argument("one scale per coordinate");
  std::vector<int> seen(dim_theta, 0);
  for (const auto& b : blocks) {
    if (b.empty()) throw std::invalid_argument("empty proposal block");
    for (std::size_t k : b) {
      if (k >= dim_theta) throw std::invalid_argument("block index out of range");
      ++seen[k];
    }
  }
  for (int c : seen) {
    if (c != 1) throw std::invalid_argument("blocks must partition the coordinates");
  }
  for (double s : scales) {
    if (!(s > 0.0)) throw std::invalid_argument("proposal scales must be positive");
  }
}

void Smc2Config::validate() const {
  if (n_theta == 0 || n_x == 0) throw std::invalid_argument("particle counts must be >= 1");
  if (!(ess_threshold >= 0.0 && ess_threshold <= 1.0)) {
    throw std::invalid_argument("ess threshold must lie in [0, 1]");
  }
  if (pmmh_sweeps == 0) throw std::invalid_argument("pmmh_sweeps must be >= 1");
  if (!(initial_scale > 0.0)) throw std::invalid_argument("initial scale must be positive");
}

}  // namespace smc2fw
