#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "mznav/common.hpp"

namespace mznav::env {

struct VelocityCommand {
  double v = 0;
  double omega = 0;
};

// Discrete sets are fixed lookup tables; the continuous space maps a raw
// 2-vector (Gaussian sample) through clamp(z, -3, 3) onto
// v in [0.05, 0.3], omega in [-pi/6, pi/6].
class ActionSpace {
 public:
  static ActionSpace disc5();
  static ActionSpace disc3();
  static ActionSpace disc21();
  static ActionSpace continuous();
  // Parses "disc5" | "disc3" | "disc21" | "continuous".
  static ActionSpace from_name(const std::string& name);

  bool is_continuous() const { return continuous_; }
  int size() const { return static_cast<int>(actions_.size()); }
  const std::vector<VelocityCommand>& table() const { return actions_; }
  const std::string& name() const { return name_; }

 private:
  bool continuous_ = false;
  std::vector<VelocityCommand> actions_;
  std::string name_;
};

// Exact table lookup; out-of-range index is a contract violation.
VelocityCommand map_discrete_action(const ActionSpace& space, int index);

// z' = clamp(z, -3, 3); v = 0.05 + (z'0+3)/6 * 0.25; omega = z'1/3 * pi/6.
VelocityCommand map_continuous_action(const std::array<double, 2>& z);

}  // namespace mznav::env
