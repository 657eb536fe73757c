#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mznav/common.hpp"
#include "mznav/nn/convkit.hpp"
#include "mznav/nn/gemm.hpp"
#include "mznav/nn/tensor.hpp"

namespace mznav::nn {

enum class LayerKind {
  kConv2d,
  kDense,
  kRelu,
  kFlatten,
  kDuelingHead,
  kSoftmaxHead,
  kGaussianHead,
};

// One layer in a sequential chain. Convolutions are valid-padding (the
// harness-side nets never pad; the depth model builds its padded conv/deconv
// stack directly on convkit).
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int units = 0;     // dense width, head action count, or gaussian dim
  int channels = 0;  // conv output channels
  int kernel = 0;
  int stride = 1;

  static LayerSpec conv2d(int channels, int kernel, int stride) {
    LayerSpec s;
    s.kind = LayerKind::kConv2d;
    s.channels = channels;
    s.kernel = kernel;
    s.stride = stride;
    return s;
  }
  static LayerSpec dense(int units) {
    LayerSpec s;
    s.kind = LayerKind::kDense;
    s.units = units;
    return s;
  }
  static LayerSpec relu() {
    LayerSpec s;
    s.kind = LayerKind::kRelu;
    return s;
  }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::kFlatten;
    return s;
  }
  // Q(s,a) = V(s) + A(s,a) - mean_a A(s,a)
  static LayerSpec dueling_head(int n_actions) {
    LayerSpec s;
    s.kind = LayerKind::kDuelingHead;
    s.units = n_actions;
    return s;
  }
  // Dense projection followed by a row softmax; outputs probabilities.
  static LayerSpec softmax_head(int n_actions) {
    LayerSpec s;
    s.kind = LayerKind::kSoftmaxHead;
    s.units = n_actions;
    return s;
  }
  // Outputs {mu, log_std} concatenated; log_std is a state-independent
  // learnable vector broadcast over the batch, initialized to 0.
  static LayerSpec gaussian_head(int dim) {
    LayerSpec s;
    s.kind = LayerKind::kGaussianHead;
    s.units = dim;
    return s;
  }
};

template <typename T>
struct BasicParam {
  std::string name;
  BasicTensor<T> value;
};

// Sequential network: layer chain, inferred per-layer output shapes, and a
// flat named parameter list (weights then biases per parametric layer, in
// chain order).
template <typename T>
class BasicNetwork {
 public:
  BasicNetwork() = default;
  BasicNetwork(std::vector<LayerSpec> layers, std::vector<int> input_shape);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<int>& input_shape() const { return input_shape_; }
  const std::vector<int>& output_shape() const { return shapes_.back(); }
  // Output shape of layer i (without batch dim).
  const std::vector<int>& shape_after(int layer) const {
    return shapes_[static_cast<std::size_t>(layer) + 1];
  }

  const std::vector<BasicParam<T>>& params() const { return params_; }
  // Mutating access invalidates outstanding activations.
  std::vector<BasicParam<T>>& mutable_params() {
    ++version_;
    return params_;
  }
  std::uint64_t version() const { return version_; }
  int param_offset(int layer) const {
    return param_offset_[static_cast<std::size_t>(layer)];
  }
  std::int64_t param_count() const;

  // Scaled-uniform init, ±sqrt(6 / fan_in) for weights, zeros for biases and
  // the gaussian log-std. Deterministic given the rng state.
  void init_params(Rng& rng);

 private:
  std::vector<LayerSpec> layers_;
  std::vector<int> input_shape_;
  std::vector<std::vector<int>> shapes_;  // shapes_[0] = input
  std::vector<BasicParam<T>> params_;
  std::vector<int> param_offset_;  // per layer; size layers+1
  std::uint64_t version_ = 0;
};

template <typename T>
struct BasicActivations {
  // act[0] is the batched input, act[i+1] the output of layer i.
  std::vector<BasicTensor<T>> act;
  // Per-layer scratch kept for backward (im2col patch matrices for convs).
  std::vector<BasicTensor<T>> cols;
  int batch = 0;
  const void* net = nullptr;
  std::uint64_t version = 0;
};

// Runs the chain on a batched input {N, ...input_shape} (a bare
// {...input_shape} sample is treated as batch 1). Throws ConfigError on shape
// mismatch and NumericError if the output is not finite.
template <typename T>
BasicActivations<T> forward(const BasicNetwork<T>& net,
                            const BasicTensor<T>& input);

template <typename T>
const BasicTensor<T>& output(const BasicActivations<T>& acts) {
  return acts.act.back();
}

// Backpropagates loss_grad (shape of the output) through the chain; returns
// per-parameter gradients aligned with net.params(). Activations must come
// from a forward against the current parameters.
template <typename T>
std::vector<BasicTensor<T>> backward(const BasicNetwork<T>& net,
                                     const BasicActivations<T>& acts,
                                     const BasicTensor<T>& loss_grad);

template <typename T>
double global_norm(const std::vector<BasicTensor<T>>& grads);

// Scales grads in place so the global L2 norm is at most max_norm; returns
// the pre-clip norm.
template <typename T>
double clip_global_norm(std::vector<BasicTensor<T>>& grads, double max_norm);

using Param = BasicParam<float>;
using Network = BasicNetwork<float>;
using Activations = BasicActivations<float>;

}  // namespace mznav::nn
