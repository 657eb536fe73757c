#include "mznav/nn/adam.hpp"

#include <cmath>

#include "mznav/common.hpp"

namespace mznav::nn {

template <typename T>
void adam_step(std::vector<BasicParam<T>>& params,
               const std::vector<BasicTensor<T>>& grads,
               BasicAdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ContractError("adam_step: params/grads/state size mismatch");
  }
  for (const auto& g : grads) {
    if (!g.all_finite()) {
      throw NumericError("adam_step: non-finite gradient, update aborted");
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.cfg.beta1, state.t);
  const double bc2 = 1.0 - std::pow(state.cfg.beta2, state.t);
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double lr = state.cfg.lr, eps = state.cfg.eps;
  for (std::size_t i = 0; i < params.size(); ++i) {
    BasicTensor<T>& p = params[i].value;
    const BasicTensor<T>& g = grads[i];
    BasicTensor<T>& m = state.m[i];
    BasicTensor<T>& v = state.v[i];
    if (g.shape() != p.shape()) {
      throw ContractError("adam_step: gradient shape mismatch at " +
                          params[i].name);
    }
    for (std::int64_t j = 0; j < p.numel(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p[j] = static_cast<T>(static_cast<double>(p[j]) -
                            lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

template void adam_step(std::vector<BasicParam<float>>&,
                        const std::vector<BasicTensor<float>>&,
                        BasicAdamState<float>&);
template void adam_step(std::vector<BasicParam<double>>&,
                        const std::vector<BasicTensor<double>>&,
                        BasicAdamState<double>&);

}  // namespace mznav::nn
