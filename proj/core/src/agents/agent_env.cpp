#include "mznav/agents/agent_env.hpp"

namespace mznav::agents {

nn::Tensor newest_frame(const nn::Tensor& state,
                        const std::vector<int>& frame_shape, int stack) {
  if (stack == 1) return state.reshaped(frame_shape);
  nn::Tensor f(frame_shape);
  const std::int64_t c = frame_shape.back();
  const std::int64_t pixels = f.numel() / c;
  const std::int64_t total_c = c * stack;
  if (pixels * total_c != state.numel()) {
    throw ContractError("newest_frame: state/frame shape mismatch");
  }
  for (std::int64_t p = 0; p < pixels; ++p) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      f[p * c + ch] = state[p * total_c + (stack - 1) * c + ch];
    }
  }
  return f;
}

}  // namespace mznav::agents
