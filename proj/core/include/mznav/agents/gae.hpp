#pragma once

#include <cstdint>
#include <vector>

#include "mznav/common.hpp"

namespace mznav::agents {

struct GaeOut {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

// Generalized advantage estimation over one contiguous segment.
// values has T+1 entries; values[T] bootstraps the final state and is
// masked by dones[T-1] like any other lookahead.
//   delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t
//   A_t     = delta_t + gamma*lambda*(1-done_t)*A_{t+1}
GaeOut gae(const std::vector<double>& rewards,
           const std::vector<double>& values,
           const std::vector<std::uint8_t>& dones, double gamma,
           double lambda);

}  // namespace mznav::agents
