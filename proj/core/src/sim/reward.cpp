#include "mznav/sim/reward.hpp"

#include <cmath>

namespace mznav::sim {

double compute_reward(bool collided, double c_d, double v, double omega) {
  if (collided) return -1.0;
  const double centered = 1.0 / (c_d + 1.0);
  return centered * centered + 0.5 * v * std::cos(omega);
}

}  // namespace mznav::sim
