#pragma once

namespace mznav::sim {

// r = -1 on collision, else (1/(c_d+1))^2 + 0.5*v*cos(omega).
// No clipping or normalization.
double compute_reward(bool collided, double c_d, double v, double omega);

}  // namespace mznav::sim
