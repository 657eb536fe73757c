#include "mznav/agents/gae.hpp"

namespace mznav::agents {

GaeOut gae(const std::vector<double>& rewards,
           const std::vector<double>& values,
           const std::vector<std::uint8_t>& dones, double gamma,
           double lambda) {
  const std::size_t t_len = rewards.size();
  if (values.size() != t_len + 1 || dones.size() != t_len) {
    throw ContractError("gae: misaligned inputs");
  }
  GaeOut out;
  out.advantages.resize(t_len);
  out.returns.resize(t_len);
  double running = 0;
  for (std::size_t i = t_len; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta =
        rewards[i] + gamma * values[i + 1] * live - values[i];
    running = delta + gamma * lambda * live * running;
    out.advantages[i] = running;
    out.returns[i] = running + values[i];
  }
  return out;
}

}  // namespace mznav::agents
