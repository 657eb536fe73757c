#include "mznav/depth/gan.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "mznav/nn/adam.hpp"
#include "mznav/nn/convkit.hpp"
#include "mznav/nn/gemm.hpp"
#include "mznav/nn/serialize.hpp"

namespace mznav::depth {

namespace {

using nn::Tensor;

constexpr int kK = 4;
constexpr int kS = 2;
constexpr int kP = 1;
constexpr int kTaps = kK * kK;

// Encoder widths; the decoder mirrors them. Spatial sizes along the encoder
// are 84 -> 42 -> 21 -> 10 -> 5; the decoder returns through the same sizes,
// which fixes the transposed convs' output sizes (21 is odd, so one stage
// carries an implicit output padding of 1).
constexpr int kWidths[5] = {1, 32, 64, 128, 256};
constexpr int kDiscWidths[4] = {2, 32, 64, 1};

int out_dim(int in) { return nn::conv_out_dim(in, kK, kS, kP); }

// {N*oh*ow, taps*c} patch matrix for a {N, h, w, c} batch.
Tensor im2col_batch(const Tensor& x) {
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int oh = out_dim(h), ow = out_dim(w);
  Tensor cols({n * oh * ow, kTaps * c});
  const std::int64_t in_stride = static_cast<std::int64_t>(h) * w * c;
  const std::int64_t out_stride = static_cast<std::int64_t>(oh) * ow * kTaps * c;
  for (int i = 0; i < n; ++i) {
    nn::im2col(x.data() + i * in_stride, h, w, c, kK, kS, kP,
               cols.data() + i * out_stride);
  }
  return cols;
}

// Scatter-add adjoint of im2col_batch onto a zeroed {N, h, w, c} canvas.
void col2im_batch(const Tensor& cols, Tensor& x) {
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int oh = out_dim(h), ow = out_dim(w);
  const std::int64_t in_stride = static_cast<std::int64_t>(h) * w * c;
  const std::int64_t out_stride = static_cast<std::int64_t>(oh) * ow * kTaps * c;
  for (int i = 0; i < n; ++i) {
    nn::col2im(cols.data() + i * out_stride, h, w, c, kK, kS, kP,
               x.data() + i * in_stride);
  }
}

void add_bias(Tensor& y, const Tensor& b) {
  const int c = b.dim(0);
  const std::int64_t rows = y.numel() / c;
  for (std::int64_t i = 0; i < rows; ++i) {
    float* row = y.data() + i * c;
    for (int ch = 0; ch < c; ++ch) row[ch] += b[ch];
  }
}

void bias_grad(const Tensor& dy, Tensor& db) {
  const int c = db.dim(0);
  const std::int64_t rows = dy.numel() / c;
  for (std::int64_t i = 0; i < rows; ++i) {
    const float* row = dy.data() + i * c;
    for (int ch = 0; ch < c; ++ch) db[ch] += row[ch];
  }
}

// Plain stride-2 conv. w {oc, 4, 4, ic}; saves the patch matrix for backward.
Tensor conv_fwd(const Tensor& x, const Tensor& w, const Tensor& b,
                Tensor& cols) {
  const int n = x.dim(0), oc = w.dim(0), ic = w.dim(3);
  const int oh = out_dim(x.dim(1)), ow = out_dim(x.dim(2));
  cols = im2col_batch(x);
  Tensor y({n, oh, ow, oc});
  const int m = n * oh * ow;
  nn::gemm(false, true, m, oc, kTaps * ic, 1.0f, cols.data(), kTaps * ic,
           w.data(), kTaps * ic, 0.0f, y.data(), oc);
  add_bias(y, b);
  return y;
}

// Accumulates dw/db; writes dx (zeroed here) unless null.
void conv_bwd(const Tensor& cols, const Tensor& dy, const Tensor& w,
              Tensor& dw, Tensor& db, Tensor* dx) {
  const int oc = w.dim(0), ic = w.dim(3);
  const int m = static_cast<int>(dy.numel()) / oc;
  nn::gemm(true, false, oc, kTaps * ic, m, 1.0f, dy.data(), oc, cols.data(),
           kTaps * ic, 1.0f, dw.data(), kTaps * ic);
  bias_grad(dy, db);
  if (dx) {
    Tensor dcols({m, kTaps * ic});
    nn::gemm(false, false, m, kTaps * ic, oc, 1.0f, dy.data(), oc, w.data(),
             kTaps * ic, 0.0f, dcols.data(), kTaps * ic);
    std::fill(dx->data(), dx->data() + dx->numel(), 0.0f);
    col2im_batch(dcols, *dx);
  }
}

// Stride-2 transposed conv, expressed as the adjoint of a stride-2 conv from
// the output canvas back to the input grid. w {ic, 4, 4, oc}; (oh, ow) are
// the target canvas sizes and must satisfy conv_out_dim(oh) == h.
Tensor deconv_fwd(const Tensor& x, const Tensor& w, const Tensor& b, int oh,
                  int ow) {
  const int n = x.dim(0), ic = w.dim(0), oc = w.dim(3);
  if (out_dim(oh) != x.dim(1) || out_dim(ow) != x.dim(2)) {
    throw ContractError("deconv: canvas size inconsistent with input grid");
  }
  const int m = n * x.dim(1) * x.dim(2);
  Tensor cols({m, kTaps * oc});
  nn::gemm(false, false, m, kTaps * oc, ic, 1.0f, x.data(), ic, w.data(),
           kTaps * oc, 0.0f, cols.data(), kTaps * oc);
  Tensor y({n, oh, ow, oc});
  col2im_batch(cols, y);
  add_bias(y, b);
  return y;
}

void deconv_bwd(const Tensor& x, const Tensor& dy, const Tensor& w, Tensor& dw,
                Tensor& db, Tensor* dx) {
  const int ic = w.dim(0), oc = w.dim(3);
  const int m = static_cast<int>(x.numel()) / ic;
  Tensor cols_dy = im2col_batch(dy);
  nn::gemm(true, false, ic, kTaps * oc, m, 1.0f, x.data(), ic, cols_dy.data(),
           kTaps * oc, 1.0f, dw.data(), kTaps * oc);
  bias_grad(dy, db);
  if (dx) {
    nn::gemm(false, true, m, ic, kTaps * oc, 1.0f, cols_dy.data(), kTaps * oc,
             w.data(), kTaps * oc, 0.0f, dx->data(), ic);
  }
}

void leaky_relu(Tensor& t) {
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    if (t[i] < 0) t[i] *= 0.2f;
  }
}

// Negative outputs keep their sign under the 0.2 slope, so the stored output
// recovers the input-side mask.
void leaky_relu_bwd(const Tensor& y, Tensor& dy) {
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    if (y[i] < 0) dy[i] *= 0.2f;
  }
}

void relu(Tensor& t) {
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    if (t[i] < 0) t[i] = 0;
  }
}

void relu_bwd(const Tensor& y, Tensor& dy) {
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    if (y[i] <= 0) dy[i] = 0;
  }
}

void sigmoid(Tensor& t) {
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    t[i] = 1.0f / (1.0f + std::exp(-t[i]));
  }
}

void sigmoid_bwd(const Tensor& y, Tensor& dy) {
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    dy[i] *= y[i] * (1.0f - y[i]);
  }
}

// Channel concat {N,h,w,ca} + {N,h,w,cb} -> {N,h,w,ca+cb}.
Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const int n = a.dim(0), h = a.dim(1), w = a.dim(2);
  const int ca = a.dim(3), cb = b.dim(3);
  Tensor y({n, h, w, ca + cb});
  const std::int64_t cells = static_cast<std::int64_t>(n) * h * w;
  for (std::int64_t i = 0; i < cells; ++i) {
    float* row = y.data() + i * (ca + cb);
    const float* pa = a.data() + i * ca;
    const float* pb = b.data() + i * cb;
    std::copy(pa, pa + ca, row);
    std::copy(pb, pb + cb, row + ca);
  }
  return y;
}

void split_channels(const Tensor& dy, Tensor& da, Tensor& db) {
  const int ca = da.dim(3), cb = db.dim(3);
  const std::int64_t cells = dy.numel() / (ca + cb);
  for (std::int64_t i = 0; i < cells; ++i) {
    const float* row = dy.data() + i * (ca + cb);
    std::copy(row, row + ca, da.data() + i * ca);
    std::copy(row + ca, row + ca + cb, db.data() + i * cb);
  }
}

// Lifts {H,W} / {H,W,1} / {N,H,W} / {N,H,W,1} onto the batched NHWC layout.
Tensor as_nhwc1(const Tensor& t) {
  switch (t.rank()) {
    case 2:
      return t.reshaped({1, t.dim(0), t.dim(1), 1});
    case 3:
      return t.dim(2) == 1 ? t.reshaped({1, t.dim(0), t.dim(1), 1})
                           : t.reshaped({t.dim(0), t.dim(1), t.dim(2), 1});
    case 4:
      return t;
    default:
      throw ContractError("depth: expected an image-shaped tensor");
  }
}

void check_frame(const Tensor& t, const char* what) {
  if (t.dim(1) != DepthModel::kSize || t.dim(2) != DepthModel::kSize ||
      t.dim(3) != 1) {
    throw ContractError(std::string("depth: ") + what + " must be " +
                        std::to_string(DepthModel::kSize) + "x" +
                        std::to_string(DepthModel::kSize) + "x1");
  }
}

struct GenCache {
  Tensor cols[4];  // encoder patch matrices
  Tensor e[4];     // post-lrelu encoder outputs
  Tensor up_in[4]; // decoder inputs: e4, s1, s2, s3
  Tensor a[3];     // post-relu decoder outputs
  Tensor pred;     // post-sigmoid output
};

// Parameter vector layout: (w, b) per stage, encoder then decoder.
void gen_forward_cached(const std::vector<nn::Param>& gp, const Tensor& x,
                        GenCache& c) {
  const Tensor* in = &x;
  int sizes[5];
  sizes[0] = x.dim(1);
  for (int i = 0; i < 4; ++i) {
    c.e[i] = conv_fwd(*in, gp[2 * i].value, gp[2 * i + 1].value, c.cols[i]);
    leaky_relu(c.e[i]);
    sizes[i + 1] = c.e[i].dim(1);
    in = &c.e[i];
  }
  c.up_in[0] = c.e[3];
  for (int i = 0; i < 3; ++i) {
    const int target = sizes[3 - i];
    c.a[i] = deconv_fwd(c.up_in[i], gp[8 + 2 * i].value, gp[9 + 2 * i].value,
                        target, target);
    relu(c.a[i]);
    c.up_in[i + 1] = concat_channels(c.a[i], c.e[2 - i]);
  }
  c.pred = deconv_fwd(c.up_in[3], gp[14].value, gp[15].value, sizes[0],
                      sizes[0]);
  sigmoid(c.pred);
}

void gen_backward(const std::vector<nn::Param>& gp, const GenCache& c,
                  Tensor dpred, std::vector<Tensor>& grads) {
  sigmoid_bwd(c.pred, dpred);
  Tensor ds3(c.up_in[3].shape());
  deconv_bwd(c.up_in[3], dpred, gp[14].value, grads[14], grads[15], &ds3);

  Tensor de[4];  // accumulated encoder-output grads
  Tensor da = std::move(ds3);
  for (int i = 2; i >= 0; --i) {
    Tensor d_act(c.a[i].shape());
    de[2 - i] = Tensor(c.e[2 - i].shape());
    split_channels(da, d_act, de[2 - i]);
    relu_bwd(c.a[i], d_act);
    Tensor d_in(c.up_in[i].shape());
    deconv_bwd(c.up_in[i], d_act, gp[8 + 2 * i].value, grads[8 + 2 * i],
               grads[9 + 2 * i], &d_in);
    da = std::move(d_in);
  }
  de[3] = std::move(da);  // grad at e4

  for (int i = 3; i >= 0; --i) {
    Tensor& d = de[i];
    leaky_relu_bwd(c.e[i], d);
    Tensor* dx = nullptr;
    Tensor d_lower;
    if (i > 0) {
      d_lower = Tensor(c.e[i - 1].shape());
      dx = &d_lower;
    }
    conv_bwd(c.cols[i], d, gp[2 * i].value, grads[2 * i], grads[2 * i + 1],
             dx);
    if (i > 0) {
      for (std::int64_t j = 0; j < d_lower.numel(); ++j) {
        de[i - 1][j] += d_lower[j];
      }
    }
  }
}

struct DiscCache {
  Tensor in;       // {N, 84, 84, 2}
  Tensor cols[3];
  Tensor h[2];     // post-lrelu hidden outputs
  Tensor logits;
};

void disc_forward_cached(const std::vector<nn::Param>& dp, const Tensor& gray,
                         const Tensor& depth, DiscCache& c) {
  c.in = concat_channels(gray, depth);
  c.h[0] = conv_fwd(c.in, dp[0].value, dp[1].value, c.cols[0]);
  leaky_relu(c.h[0]);
  c.h[1] = conv_fwd(c.h[0], dp[2].value, dp[3].value, c.cols[1]);
  leaky_relu(c.h[1]);
  c.logits = conv_fwd(c.h[1], dp[4].value, dp[5].value, c.cols[2]);
}

// grads may be null (generator step: only the input gradient is wanted);
// d_depth, when given, receives the depth-channel slice of the input grad.
void disc_backward(const std::vector<nn::Param>& dp, const DiscCache& c,
                   Tensor dz, std::vector<Tensor>* grads, Tensor* d_depth) {
  std::vector<Tensor> scratch;
  if (!grads) {
    scratch.reserve(dp.size());
    for (const auto& p : dp) scratch.emplace_back(p.value.shape());
    grads = &scratch;
  }
  Tensor dh1(c.h[1].shape());
  conv_bwd(c.cols[2], dz, dp[4].value, (*grads)[4], (*grads)[5], &dh1);
  leaky_relu_bwd(c.h[1], dh1);
  Tensor dh0(c.h[0].shape());
  conv_bwd(c.cols[1], dh1, dp[2].value, (*grads)[2], (*grads)[3], &dh0);
  leaky_relu_bwd(c.h[0], dh0);
  if (d_depth) {
    Tensor din(c.in.shape());
    conv_bwd(c.cols[0], dh0, dp[0].value, (*grads)[0], (*grads)[1], &din);
    Tensor d_gray(d_depth->shape());
    split_channels(din, d_gray, *d_depth);
  } else {
    conv_bwd(c.cols[0], dh0, dp[0].value, (*grads)[0], (*grads)[1], nullptr);
  }
}

std::vector<Tensor> zero_grads(const std::vector<nn::Param>& params) {
  std::vector<Tensor> g;
  g.reserve(params.size());
  for (const auto& p : params) g.emplace_back(p.value.shape());
  return g;
}

void glorot_init(std::vector<nn::Param>& params, Rng& rng) {
  for (auto& p : params) {
    if (p.value.rank() < 2) {
      std::fill(p.value.data(), p.value.data() + p.value.numel(), 0.0f);
      continue;
    }
    std::int64_t fan_in = 1;
    for (int d = 1; d < p.value.rank(); ++d) fan_in *= p.value.dim(d);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::int64_t j = 0; j < p.value.numel(); ++j) {
      p.value[j] = static_cast<float>(rng.uniform(-bound, bound));
    }
  }
}

Tensor gather_pairs(const std::vector<nn::Tensor>& frames,
                    const std::vector<int>& order, int first, int count) {
  const int hw = DepthModel::kSize * DepthModel::kSize;
  Tensor out({count, DepthModel::kSize, DepthModel::kSize, 1});
  for (int i = 0; i < count; ++i) {
    const nn::Tensor& f = frames[static_cast<std::size_t>(order[first + i])];
    std::copy(f.data(), f.data() + hw, out.data() + static_cast<std::int64_t>(i) * hw);
  }
  return out;
}

}  // namespace

DepthModel::DepthModel() {
  auto conv = [](const std::string& name, int oc, int ic) {
    return nn::Param{name + ".w", Tensor({oc, kK, kK, ic})};
  };
  auto deconv = [](const std::string& name, int ic, int oc) {
    return nn::Param{name + ".w", Tensor({ic, kK, kK, oc})};
  };
  auto bias = [](const std::string& name, int c) {
    return nn::Param{name + ".b", Tensor({c})};
  };

  for (int i = 0; i < 4; ++i) {
    const std::string name = "G.d" + std::to_string(i + 1);
    gen_.push_back(conv(name, kWidths[i + 1], kWidths[i]));
    gen_.push_back(bias(name, kWidths[i + 1]));
  }
  // Decoder inputs carry the skip concat, so widths double past the first.
  const int up_in[4] = {256, 256, 128, 64};
  const int up_out[4] = {128, 64, 32, 1};
  for (int i = 0; i < 4; ++i) {
    const std::string name = "G.u" + std::to_string(i + 1);
    gen_.push_back(deconv(name, up_in[i], up_out[i]));
    gen_.push_back(bias(name, up_out[i]));
  }
  for (int i = 0; i < 3; ++i) {
    const std::string name = "D.c" + std::to_string(i + 1);
    disc_.push_back(conv(name, kDiscWidths[i + 1], kDiscWidths[i]));
    disc_.push_back(bias(name, kDiscWidths[i + 1]));
  }
}

void DepthModel::init(std::uint64_t seed) {
  Rng g = Rng::derive(seed, 0x67646570);  // "gdep"
  Rng d = Rng::derive(seed, 0x64646570);  // "ddep"
  glorot_init(gen_, g);
  glorot_init(disc_, d);
}

void DepthModel::save(io::Writer& w) const {
  nn::write_params(w, gen_);
  nn::write_params(w, disc_);
}

void DepthModel::load(io::Reader& r) {
  nn::read_params(r, gen_);
  nn::read_params(r, disc_);
}

void save_model(const DepthModel& model, const std::string& path) {
  io::Writer w;
  model.save(w);
  io::write_file(path, w.data());
}

DepthModel load_model(const std::string& path) {
  const std::vector<char> buf = io::read_file(path);
  io::Reader r(buf);
  DepthModel m;
  m.load(r);
  return m;
}

nn::Tensor generator_forward(const DepthModel& model, const nn::Tensor& gray) {
  const Tensor x = as_nhwc1(gray);
  check_frame(x, "generator input");
  GenCache c;
  gen_forward_cached(model.gen_params(), x, c);
  return c.pred;
}

nn::Tensor discriminator_forward(const DepthModel& model,
                                 const nn::Tensor& gray,
                                 const nn::Tensor& depth) {
  const Tensor x = as_nhwc1(gray);
  const Tensor y = as_nhwc1(depth);
  check_frame(x, "discriminator gray input");
  check_frame(y, "discriminator depth input");
  DiscCache c;
  disc_forward_cached(model.disc_params(), x, y, c);
  return c.logits;
}

nn::Tensor predict_depth(const DepthModel& model, const nn::Tensor& gray) {
  Tensor pred = generator_forward(model, gray);
  return pred.reshaped({DepthModel::kSize, DepthModel::kSize});
}

double bce_with_logits(const nn::Tensor& logits, double label,
                       nn::Tensor* dlogits) {
  if (logits.numel() == 0) throw ContractError("bce: empty logits");
  if (dlogits) *dlogits = Tensor(logits.shape());
  double sum = 0;
  const double inv = 1.0 / static_cast<double>(logits.numel());
  for (std::int64_t i = 0; i < logits.numel(); ++i) {
    const double z = logits[i];
    const double softplus =
        z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    sum += softplus - label * z;
    if (dlogits) {
      const double sig = 1.0 / (1.0 + std::exp(-z));
      (*dlogits)[i] = static_cast<float>((sig - label) * inv);
    }
  }
  return sum * inv;
}

DepthTrainResult train_depth(const PairDataset& ds, const GanTrainConfig& cfg) {
  if (ds.train.empty()) throw ContractError("train_depth: empty train split");
  if (cfg.epochs < 1) throw ConfigError("train_depth: epochs must be >= 1");
  if (cfg.lambda_l1 < 0) throw ConfigError("train_depth: lambda_l1 < 0");
  if (cfg.batch < 1) throw ConfigError("train_depth: batch must be >= 1");
  if (!(cfg.lr > 0)) throw ConfigError("train_depth: lr must be positive");

  DepthTrainResult out;
  out.model.init(cfg.seed);
  auto& gp = out.model.gen_params();
  auto& dp = out.model.disc_params();

  nn::AdamConfig adam_cfg{cfg.lr, cfg.beta1, 0.999, 1e-8};
  nn::AdamState g_adam, d_adam;
  g_adam.init(gp, adam_cfg);
  d_adam.init(dp, adam_cfg);

  Rng rng = Rng::derive(cfg.seed, 0x74646570);  // "tdep"
  std::vector<int> order = ds.train;
  const int n_train = static_cast<int>(order.size());

  DepthModel snapshot = out.model;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n_train - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.range(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(j)]);
    }

    double d_sum = 0, adv_sum = 0, l1_sum = 0;
    bool finite = true;
    for (int first = 0; first < n_train && finite; first += cfg.batch) {
      const int bsz = std::min(cfg.batch, n_train - first);
      const Tensor x = gather_pairs(ds.gray, order, first, bsz);
      const Tensor y = gather_pairs(ds.depth, order, first, bsz);

      GenCache gc;
      gen_forward_cached(gp, x, gc);
      const Tensor& pred = gc.pred;

      double d_loss = 0, g_adv = 0;
      if (!cfg.l1_only) {
        // Discriminator step: half-weighted real and fake passes against the
        // current (detached) prediction.
        std::vector<Tensor> d_grads = zero_grads(dp);
        DiscCache dc;
        Tensor dz;
        disc_forward_cached(dp, x, y, dc);
        d_loss = 0.5 * bce_with_logits(dc.logits, 1.0, &dz);
        for (std::int64_t k = 0; k < dz.numel(); ++k) dz[k] *= 0.5f;
        disc_backward(dp, dc, std::move(dz), &d_grads, nullptr);
        disc_forward_cached(dp, x, pred, dc);
        d_loss += 0.5 * bce_with_logits(dc.logits, 0.0, &dz);
        for (std::int64_t k = 0; k < dz.numel(); ++k) dz[k] *= 0.5f;
        disc_backward(dp, dc, std::move(dz), &d_grads, nullptr);
        if (!std::isfinite(d_loss)) {
          finite = false;
          break;
        }
        try {
          nn::adam_step(dp, d_grads, d_adam);
        } catch (const NumericError&) {
          finite = false;
          break;
        }
      }

      // Generator step: adversarial gradient through the (updated)
      // discriminator's depth input plus the weighted L1 term.
      Tensor dpred({bsz, DepthModel::kSize, DepthModel::kSize, 1});
      if (!cfg.l1_only) {
        DiscCache dc;
        Tensor dz;
        disc_forward_cached(dp, x, pred, dc);
        g_adv = bce_with_logits(dc.logits, 1.0, &dz);
        disc_backward(dp, dc, std::move(dz), nullptr, &dpred);
      }
      double l1 = 0;
      const double inv = 1.0 / static_cast<double>(pred.numel());
      for (std::int64_t k = 0; k < pred.numel(); ++k) {
        const double diff = static_cast<double>(pred[k]) - y[k];
        l1 += std::abs(diff);
        if (diff > 0) {
          dpred[k] += static_cast<float>(cfg.lambda_l1 * inv);
        } else if (diff < 0) {
          dpred[k] -= static_cast<float>(cfg.lambda_l1 * inv);
        }
      }
      l1 *= inv;
      if (!std::isfinite(g_adv) || !std::isfinite(l1)) {
        finite = false;
        break;
      }
      std::vector<Tensor> g_grads = zero_grads(gp);
      gen_backward(gp, gc, std::move(dpred), g_grads);
      try {
        nn::adam_step(gp, g_grads, g_adam);
      } catch (const NumericError&) {
        finite = false;
        break;
      }

      d_sum += d_loss * bsz;
      adv_sum += g_adv * bsz;
      l1_sum += l1 * bsz;
    }

    if (!finite) {
      out.model = snapshot;
      out.diverged = true;
      return out;
    }
    out.losses.push_back(
        {d_sum / n_train, adv_sum / n_train, l1_sum / n_train});
    snapshot = out.model;
  }
  return out;
}

DepthEval evaluate_depth(env::DepthPredictor& model, const PairDataset& ds) {
  if (ds.holdout.empty()) {
    throw ContractError("evaluate_depth: empty holdout split");
  }
  DepthEval ev;
  ev.per_pair.reserve(ds.holdout.size());
  double sum = 0;
  for (int idx : ds.holdout) {
    const nn::Tensor& gray = ds.gray[static_cast<std::size_t>(idx)];
    const nn::Tensor& truth = ds.depth[static_cast<std::size_t>(idx)];
    const nn::Tensor pred = model.predict(gray);
    if (pred.numel() != truth.numel()) {
      throw ContractError("evaluate_depth: prediction shape mismatch");
    }
    double l1 = 0;
    for (std::int64_t i = 0; i < truth.numel(); ++i) {
      l1 += std::abs(static_cast<double>(pred[i]) - truth[i]);
    }
    l1 /= static_cast<double>(truth.numel());
    ev.per_pair.push_back(l1);
    sum += l1;
  }
  ev.mean_l1 = sum / static_cast<double>(ev.per_pair.size());
  return ev;
}

DepthEval evaluate_depth(const DepthModel& model, const PairDataset& ds) {
  PredictorAdapter adapter(&model);
  return evaluate_depth(adapter, ds);
}

nn::Tensor PredictorAdapter::predict(const nn::Tensor& gray) {
  return predict_depth(*model_, gray);
}

}  // namespace mznav::depth
