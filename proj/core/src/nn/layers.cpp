#include "mznav/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mznav::nn {

namespace {

std::int64_t prod(const std::vector<int>& dims) {
  std::int64_t n = 1;
  for (int d : dims) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "}";
}

int feature_dim(const LayerSpec& spec, const std::vector<int>& in,
                int layer_idx) {
  if (in.size() != 1) {
    throw ConfigError("layer " + std::to_string(layer_idx) +
                      ": expects a flat feature input, got " + shape_str(in));
  }
  (void)spec;
  return in[0];
}

std::vector<int> infer_output_shape(const LayerSpec& spec,
                                    const std::vector<int>& in, int idx) {
  switch (spec.kind) {
    case LayerKind::kConv2d: {
      if (in.size() != 3) {
        throw ConfigError("layer " + std::to_string(idx) +
                          ": conv2d expects {H,W,C} input, got " +
                          shape_str(in));
      }
      if (spec.kernel < 1 || spec.stride < 1 || spec.channels < 1) {
        throw ConfigError("layer " + std::to_string(idx) +
                          ": conv2d kernel/stride/channels must be positive");
      }
      if (spec.kernel > in[0] || spec.kernel > in[1]) {
        throw ConfigError("layer " + std::to_string(idx) + ": kernel " +
                          std::to_string(spec.kernel) +
                          " exceeds input spatial dims " + shape_str(in));
      }
      return {conv_out_dim(in[0], spec.kernel, spec.stride, 0),
              conv_out_dim(in[1], spec.kernel, spec.stride, 0), spec.channels};
    }
    case LayerKind::kDense:
      feature_dim(spec, in, idx);
      if (spec.units < 1) {
        throw ConfigError("layer " + std::to_string(idx) +
                          ": dense units must be positive");
      }
      return {spec.units};
    case LayerKind::kRelu:
      return in;
    case LayerKind::kFlatten:
      return {static_cast<int>(prod(in))};
    case LayerKind::kDuelingHead:
    case LayerKind::kSoftmaxHead:
      feature_dim(spec, in, idx);
      if (spec.units < 2) {
        throw ConfigError("layer " + std::to_string(idx) +
                          ": head needs at least 2 actions");
      }
      return {spec.units};
    case LayerKind::kGaussianHead:
      feature_dim(spec, in, idx);
      if (spec.units < 1) {
        throw ConfigError("layer " + std::to_string(idx) +
                          ": gaussian dim must be positive");
      }
      return {2 * spec.units};
  }
  throw ConfigError("unknown layer kind");
}

template <typename T>
void add_param(std::vector<BasicParam<T>>& out, int layer, const char* suffix,
               std::vector<int> shape) {
  BasicParam<T> p;
  p.name = "L" + std::to_string(layer) + "." + suffix;
  p.value = BasicTensor<T>(std::move(shape));
  out.push_back(std::move(p));
}

}  // namespace

template <typename T>
BasicNetwork<T>::BasicNetwork(std::vector<LayerSpec> layers,
                              std::vector<int> input_shape)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)) {
  if (layers_.empty()) throw ConfigError("network: empty layer chain");
  shapes_.push_back(input_shape_);
  param_offset_.push_back(0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& spec = layers_[i];
    const std::vector<int> in = shapes_.back();
    shapes_.push_back(infer_output_shape(spec, in, static_cast<int>(i)));
    const int li = static_cast<int>(i);
    switch (spec.kind) {
      case LayerKind::kConv2d:
        add_param(params_, li, "w",
                  {spec.channels, spec.kernel, spec.kernel, in[2]});
        add_param(params_, li, "b", {spec.channels});
        break;
      case LayerKind::kDense:
        add_param(params_, li, "w", {spec.units, in[0]});
        add_param(params_, li, "b", {spec.units});
        break;
      case LayerKind::kDuelingHead:
        add_param(params_, li, "value.w", {1, in[0]});
        add_param(params_, li, "value.b", {1});
        add_param(params_, li, "adv.w", {spec.units, in[0]});
        add_param(params_, li, "adv.b", {spec.units});
        break;
      case LayerKind::kSoftmaxHead:
        add_param(params_, li, "w", {spec.units, in[0]});
        add_param(params_, li, "b", {spec.units});
        break;
      case LayerKind::kGaussianHead:
        add_param(params_, li, "mu.w", {spec.units, in[0]});
        add_param(params_, li, "mu.b", {spec.units});
        add_param(params_, li, "logstd", {spec.units});
        break;
      case LayerKind::kRelu:
      case LayerKind::kFlatten:
        break;
    }
    param_offset_.push_back(static_cast<int>(params_.size()));
  }
}

template <typename T>
std::int64_t BasicNetwork<T>::param_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
void BasicNetwork<T>::init_params(Rng& rng) {
  ++version_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const int first = param_offset_[i];
    const int last = param_offset_[i + 1];
    for (int pi = first; pi < last; ++pi) {
      BasicParam<T>& p = params_[static_cast<std::size_t>(pi)];
      const auto& shape = p.value.shape();
      const bool is_weight = shape.size() >= 2;
      if (!is_weight) {
        for (std::int64_t j = 0; j < p.value.numel(); ++j) p.value[j] = T(0);
        continue;
      }
      std::int64_t fan_in = 1;
      for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (std::int64_t j = 0; j < p.value.numel(); ++j) {
        p.value[j] = static_cast<T>(rng.uniform(-bound, bound));
      }
    }
  }
}

namespace {

// y {N,U} = x {N,F} * W^T {F,U} + b
template <typename T>
void dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                   const BasicTensor<T>& b, BasicTensor<T>& y) {
  const int n = x.dim(0), f = x.dim(1), u = w.dim(0);
  gemm(false, true, n, u, f, T(1), x.data(), f, w.data(), f, T(0), y.data(),
       u);
  for (int i = 0; i < n; ++i) {
    T* row = y.data() + static_cast<std::size_t>(i) * u;
    for (int j = 0; j < u; ++j) row[j] += b[j];
  }
}

// Given dY {N,U}: accumulates dW, db and (optionally) dX.
template <typename T>
void dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                    const BasicTensor<T>& dy, BasicTensor<T>& dw,
                    BasicTensor<T>& db, BasicTensor<T>* dx,
                    bool accumulate_dx) {
  const int n = x.dim(0), f = x.dim(1), u = w.dim(0);
  gemm(true, false, u, f, n, T(1), dy.data(), u, x.data(), f, T(0), dw.data(),
       f);
  for (int j = 0; j < u; ++j) db[j] = T(0);
  for (int i = 0; i < n; ++i) {
    const T* row = dy.data() + static_cast<std::size_t>(i) * u;
    for (int j = 0; j < u; ++j) db[j] += row[j];
  }
  if (dx != nullptr) {
    gemm(false, false, n, f, u, T(1), dy.data(), u, w.data(), f,
         accumulate_dx ? T(1) : T(0), dx->data(), f);
  }
}

}  // namespace

template <typename T>
BasicActivations<T> forward(const BasicNetwork<T>& net,
                            const BasicTensor<T>& input) {
  const auto& in_shape = net.input_shape();
  const int in_rank = static_cast<int>(in_shape.size());
  BasicTensor<T> x = input;
  if (input.rank() == in_rank) {
    std::vector<int> batched{1};
    batched.insert(batched.end(), in_shape.begin(), in_shape.end());
    if (input.shape() != in_shape) {
      throw ConfigError("forward: input shape " + input.shape_str() +
                        " does not match network input");
    }
    x.set_shape(batched);
  } else if (input.rank() == in_rank + 1) {
    for (int d = 0; d < in_rank; ++d) {
      if (input.dim(d + 1) != in_shape[static_cast<std::size_t>(d)]) {
        throw ConfigError("forward: input shape " + input.shape_str() +
                          " does not match network input");
      }
    }
  } else {
    throw ConfigError("forward: input rank mismatch");
  }

  const int batch = x.dim(0);
  BasicActivations<T> acts;
  acts.batch = batch;
  acts.net = &net;
  acts.version = net.version();
  acts.act.reserve(net.layers().size() + 1);
  acts.cols.resize(net.layers().size());
  acts.act.push_back(std::move(x));

  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    const LayerSpec& spec = net.layers()[li];
    const BasicTensor<T>& in = acts.act.back();
    const auto& out_dims = net.shape_after(static_cast<int>(li));
    std::vector<int> out_shape{batch};
    out_shape.insert(out_shape.end(), out_dims.begin(), out_dims.end());
    const int po = net.param_offset(static_cast<int>(li));
    const auto& params = net.params();

    switch (spec.kind) {
      case LayerKind::kConv2d: {
        const int h = in.dim(1), w = in.dim(2), c = in.dim(3);
        const int k = spec.kernel, s = spec.stride, oc = spec.channels;
        const int oh = out_dims[0], ow = out_dims[1];
        const int kk = k * k * c;
        const std::int64_t rows =
            static_cast<std::int64_t>(batch) * oh * ow;
        BasicTensor<T> cols({static_cast<int>(rows), kk});
        const std::int64_t sample_in = static_cast<std::int64_t>(h) * w * c;
        const std::int64_t sample_rows = static_cast<std::int64_t>(oh) * ow;
        for (int n = 0; n < batch; ++n) {
          im2col(in.data() + n * sample_in, h, w, c, k, s, 0,
                 cols.data() + n * sample_rows * kk);
        }
        BasicTensor<T> out(out_shape);
        const BasicTensor<T>& wt = params[po].value;
        const BasicTensor<T>& bias = params[po + 1].value;
        gemm(false, true, static_cast<int>(rows), oc, kk, T(1), cols.data(),
             kk, wt.data(), kk, T(0), out.data(), oc);
        for (std::int64_t r = 0; r < rows; ++r) {
          T* row = out.data() + r * oc;
          for (int j = 0; j < oc; ++j) row[j] += bias[j];
        }
        acts.cols[li] = std::move(cols);
        acts.act.push_back(std::move(out));
        break;
      }
      case LayerKind::kDense: {
        BasicTensor<T> out(out_shape);
        dense_forward(in, params[po].value, params[po + 1].value, out);
        acts.act.push_back(std::move(out));
        break;
      }
      case LayerKind::kRelu: {
        BasicTensor<T> out = in;
        for (std::int64_t j = 0; j < out.numel(); ++j) {
          if (out[j] < T(0)) out[j] = T(0);
        }
        acts.act.push_back(std::move(out));
        break;
      }
      case LayerKind::kFlatten: {
        BasicTensor<T> out = in.reshaped(out_shape);
        acts.act.push_back(std::move(out));
        break;
      }
      case LayerKind::kDuelingHead: {
        const int a = spec.units;
        BasicTensor<T> value({batch, 1});
        BasicTensor<T> adv({batch, a});
        dense_forward(in, params[po].value, params[po + 1].value, value);
        dense_forward(in, params[po + 2].value, params[po + 3].value, adv);
        BasicTensor<T> out(out_shape);
        for (int n = 0; n < batch; ++n) {
          const T* arow = adv.data() + static_cast<std::size_t>(n) * a;
          T mean = T(0);
          for (int j = 0; j < a; ++j) mean += arow[j];
          mean /= static_cast<T>(a);
          T* qrow = out.data() + static_cast<std::size_t>(n) * a;
          for (int j = 0; j < a; ++j) qrow[j] = value[n] + arow[j] - mean;
        }
        acts.act.push_back(std::move(out));
        break;
      }
      case LayerKind::kSoftmaxHead: {
        const int a = spec.units;
        BasicTensor<T> out(out_shape);
        dense_forward(in, params[po].value, params[po + 1].value, out);
        for (int n = 0; n < batch; ++n) {
          T* row = out.data() + static_cast<std::size_t>(n) * a;
          T mx = row[0];
          for (int j = 1; j < a; ++j) mx = std::max(mx, row[j]);
          T sum = T(0);
          for (int j = 0; j < a; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
          }
          for (int j = 0; j < a; ++j) row[j] /= sum;
        }
        acts.act.push_back(std::move(out));
        break;
      }
      case LayerKind::kGaussianHead: {
        const int d = spec.units;
        BasicTensor<T> mu({batch, d});
        dense_forward(in, params[po].value, params[po + 1].value, mu);
        const BasicTensor<T>& logstd = params[po + 2].value;
        BasicTensor<T> out(out_shape);
        for (int n = 0; n < batch; ++n) {
          T* row = out.data() + static_cast<std::size_t>(n) * 2 * d;
          const T* mrow = mu.data() + static_cast<std::size_t>(n) * d;
          for (int j = 0; j < d; ++j) row[j] = mrow[j];
          for (int j = 0; j < d; ++j) row[d + j] = logstd[j];
        }
        acts.act.push_back(std::move(out));
        break;
      }
    }
  }

  if (!acts.act.back().all_finite()) {
    throw NumericError("forward: non-finite network output");
  }
  return acts;
}

template <typename T>
std::vector<BasicTensor<T>> backward(const BasicNetwork<T>& net,
                                     const BasicActivations<T>& acts,
                                     const BasicTensor<T>& loss_grad) {
  if (acts.net != &net || acts.version != net.version()) {
    throw ContractError(
        "backward: activations are stale (parameters changed since forward)");
  }
  if (loss_grad.shape() != acts.act.back().shape()) {
    throw ConfigError("backward: loss_grad shape " + loss_grad.shape_str() +
                      " does not match output " +
                      acts.act.back().shape_str());
  }

  std::vector<BasicTensor<T>> grads;
  grads.reserve(net.params().size());
  for (const auto& p : net.params()) {
    grads.emplace_back(p.value.shape());
  }

  const int batch = acts.batch;
  BasicTensor<T> g = loss_grad;
  const int n_layers = static_cast<int>(net.layers().size());
  for (int li = n_layers - 1; li >= 0; --li) {
    const LayerSpec& spec = net.layers()[static_cast<std::size_t>(li)];
    const BasicTensor<T>& in = acts.act[static_cast<std::size_t>(li)];
    const BasicTensor<T>& out = acts.act[static_cast<std::size_t>(li) + 1];
    const int po = net.param_offset(li);
    const auto& params = net.params();
    const bool need_dx = li > 0;

    switch (spec.kind) {
      case LayerKind::kConv2d: {
        const int h = in.dim(1), w = in.dim(2), c = in.dim(3);
        const int k = spec.kernel, s = spec.stride, oc = spec.channels;
        const int oh = out.dim(1), ow = out.dim(2);
        const int kk = k * k * c;
        const std::int64_t rows = static_cast<std::int64_t>(batch) * oh * ow;
        const BasicTensor<T>& cols = acts.cols[static_cast<std::size_t>(li)];
        const BasicTensor<T>& wt = params[po].value;
        // dW = g^T * cols
        gemm(true, false, oc, kk, static_cast<int>(rows), T(1), g.data(), oc,
             cols.data(), kk, T(0), grads[static_cast<std::size_t>(po)].data(),
             kk);
        BasicTensor<T>& db = grads[static_cast<std::size_t>(po) + 1];
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* row = g.data() + r * oc;
          for (int j = 0; j < oc; ++j) db[j] += row[j];
        }
        if (need_dx) {
          BasicTensor<T> dcols({static_cast<int>(rows), kk});
          gemm(false, false, static_cast<int>(rows), kk, oc, T(1), g.data(),
               oc, wt.data(), kk, T(0), dcols.data(), kk);
          BasicTensor<T> dx(in.shape());
          const std::int64_t sample_in = static_cast<std::int64_t>(h) * w * c;
          const std::int64_t sample_rows = static_cast<std::int64_t>(oh) * ow;
          for (int n = 0; n < batch; ++n) {
            col2im(dcols.data() + n * sample_rows * kk, h, w, c, k, s, 0,
                   dx.data() + n * sample_in);
          }
          g = std::move(dx);
        }
        break;
      }
      case LayerKind::kDense: {
        BasicTensor<T> dx;
        if (need_dx) dx = BasicTensor<T>(in.shape());
        dense_backward(in, params[po].value, g,
                       grads[static_cast<std::size_t>(po)],
                       grads[static_cast<std::size_t>(po) + 1],
                       need_dx ? &dx : nullptr, false);
        if (need_dx) g = std::move(dx);
        break;
      }
      case LayerKind::kRelu: {
        BasicTensor<T> dx = g;
        for (std::int64_t j = 0; j < dx.numel(); ++j) {
          if (out[j] <= T(0)) dx[j] = T(0);
        }
        g = std::move(dx);
        break;
      }
      case LayerKind::kFlatten: {
        g.set_shape(in.shape());
        break;
      }
      case LayerKind::kDuelingHead: {
        const int a = spec.units;
        BasicTensor<T> dvalue({batch, 1});
        BasicTensor<T> dadv({batch, a});
        for (int n = 0; n < batch; ++n) {
          const T* grow = g.data() + static_cast<std::size_t>(n) * a;
          T sum = T(0);
          for (int j = 0; j < a; ++j) sum += grow[j];
          dvalue[n] = sum;
          const T mean = sum / static_cast<T>(a);
          T* drow = dadv.data() + static_cast<std::size_t>(n) * a;
          for (int j = 0; j < a; ++j) drow[j] = grow[j] - mean;
        }
        BasicTensor<T> dx;
        if (need_dx) dx = BasicTensor<T>(in.shape());
        dense_backward(in, params[po].value, dvalue,
                       grads[static_cast<std::size_t>(po)],
                       grads[static_cast<std::size_t>(po) + 1],
                       need_dx ? &dx : nullptr, false);
        dense_backward(in, params[po + 2].value, dadv,
                       grads[static_cast<std::size_t>(po) + 2],
                       grads[static_cast<std::size_t>(po) + 3],
                       need_dx ? &dx : nullptr, true);
        if (need_dx) g = std::move(dx);
        break;
      }
      case LayerKind::kSoftmaxHead: {
        const int a = spec.units;
        BasicTensor<T> dz({batch, a});
        for (int n = 0; n < batch; ++n) {
          const T* p = out.data() + static_cast<std::size_t>(n) * a;
          const T* grow = g.data() + static_cast<std::size_t>(n) * a;
          T dot = T(0);
          for (int j = 0; j < a; ++j) dot += grow[j] * p[j];
          T* drow = dz.data() + static_cast<std::size_t>(n) * a;
          for (int j = 0; j < a; ++j) drow[j] = p[j] * (grow[j] - dot);
        }
        BasicTensor<T> dx;
        if (need_dx) dx = BasicTensor<T>(in.shape());
        dense_backward(in, params[po].value, dz,
                       grads[static_cast<std::size_t>(po)],
                       grads[static_cast<std::size_t>(po) + 1],
                       need_dx ? &dx : nullptr, false);
        if (need_dx) g = std::move(dx);
        break;
      }
      case LayerKind::kGaussianHead: {
        const int d = spec.units;
        BasicTensor<T> dmu({batch, d});
        BasicTensor<T>& dlogstd = grads[static_cast<std::size_t>(po) + 2];
        for (int n = 0; n < batch; ++n) {
          const T* grow = g.data() + static_cast<std::size_t>(n) * 2 * d;
          T* mrow = dmu.data() + static_cast<std::size_t>(n) * d;
          for (int j = 0; j < d; ++j) mrow[j] = grow[j];
          for (int j = 0; j < d; ++j) dlogstd[j] += grow[d + j];
        }
        BasicTensor<T> dx;
        if (need_dx) dx = BasicTensor<T>(in.shape());
        dense_backward(in, params[po].value, dmu,
                       grads[static_cast<std::size_t>(po)],
                       grads[static_cast<std::size_t>(po) + 1],
                       need_dx ? &dx : nullptr, false);
        if (need_dx) g = std::move(dx);
        break;
      }
    }
  }
  return grads;
}

template <typename T>
double global_norm(const std::vector<BasicTensor<T>>& grads) {
  double sq = 0;
  for (const auto& g : grads) {
    for (std::int64_t j = 0; j < g.numel(); ++j) {
      const double v = static_cast<double>(g[j]);
      sq += v * v;
    }
  }
  return std::sqrt(sq);
}

template <typename T>
double clip_global_norm(std::vector<BasicTensor<T>>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& g : grads) {
      for (std::int64_t j = 0; j < g.numel(); ++j) g[j] *= scale;
    }
  }
  return norm;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;
template BasicActivations<float> forward(const BasicNetwork<float>&,
                                         const BasicTensor<float>&);
template BasicActivations<double> forward(const BasicNetwork<double>&,
                                          const BasicTensor<double>&);
template std::vector<BasicTensor<float>> backward(
    const BasicNetwork<float>&, const BasicActivations<float>&,
    const BasicTensor<float>&);
template std::vector<BasicTensor<double>> backward(
    const BasicNetwork<double>&, const BasicActivations<double>&,
    const BasicTensor<double>&);
template double global_norm(const std::vector<BasicTensor<float>>&);
template double global_norm(const std::vector<BasicTensor<double>>&);
template double clip_global_norm(std::vector<BasicTensor<float>>&, double);
template double clip_global_norm(std::vector<BasicTensor<double>>&, double);

}  // namespace mznav::nn
