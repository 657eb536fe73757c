#include "mznav/env/actions.hpp"

#include <algorithm>

namespace mznav::env {

ActionSpace ActionSpace::disc5() {
  ActionSpace s;
  s.name_ = "disc5";
  s.actions_ = {{0.3, 0.0},
                {0.05, -kPi / 6},
                {0.05, -kPi / 12},
                {0.05, kPi / 12},
                {0.05, kPi / 6}};
  return s;
}

ActionSpace ActionSpace::disc3() {
  ActionSpace s;
  s.name_ = "disc3";
  s.actions_ = {{0.3, -0.3}, {0.3, 0.0}, {0.3, 0.3}};
  return s;
}

ActionSpace ActionSpace::disc21() {
  ActionSpace s;
  s.name_ = "disc21";
  for (int n = 0; n <= 20; ++n) {
    const double omega = -kPi / 6 + n * kPi / 60;
    s.actions_.push_back({n == 10 ? 0.3 : 0.05, omega});
  }
  return s;
}

ActionSpace ActionSpace::continuous() {
  ActionSpace s;
  s.continuous_ = true;
  s.name_ = "continuous";
  return s;
}

ActionSpace ActionSpace::from_name(const std::string& name) {
  if (name == "disc5") return disc5();
  if (name == "disc3") return disc3();
  if (name == "disc21") return disc21();
  if (name == "continuous") return continuous();
  throw ConfigError("unknown action space '" + name + "'");
}

VelocityCommand map_discrete_action(const ActionSpace& space, int index) {
  if (space.is_continuous()) {
    throw ContractError("map_discrete_action on a continuous space");
  }
  if (index < 0 || index >= space.size()) {
    throw ContractError("action index " + std::to_string(index) +
                        " out of range [0, " + std::to_string(space.size()) +
                        ")");
  }
  return space.table()[static_cast<std::size_t>(index)];
}

VelocityCommand map_continuous_action(const std::array<double, 2>& z) {
  const double z0 = std::clamp(z[0], -3.0, 3.0);
  const double z1 = std::clamp(z[1], -3.0, 3.0);
  VelocityCommand c;
  c.v = 0.05 + (z0 + 3.0) / 6.0 * 0.25;
  c.omega = z1 / 3.0 * (kPi / 6.0);
  return c;
}

}  // namespace mznav::env
