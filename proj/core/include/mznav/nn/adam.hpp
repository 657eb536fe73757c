#pragma once

#include <cstdint>
#include <vector>

#include "mznav/nn/layers.hpp"
#include "mznav/nn/tensor.hpp"

namespace mznav::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct BasicAdamState {
  AdamConfig cfg;
  std::int64_t t = 0;
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;

  void init(const std::vector<BasicParam<T>>& params, AdamConfig config) {
    cfg = config;
    t = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.value.shape());
      v.emplace_back(p.value.shape());
    }
  }
};

// Bias-corrected Adam update in place. Throws NumericError (before touching
// any state) if a gradient is non-finite.
template <typename T>
void adam_step(std::vector<BasicParam<T>>& params,
               const std::vector<BasicTensor<T>>& grads,
               BasicAdamState<T>& state);

using AdamState = BasicAdamState<float>;

}  // namespace mznav::nn
