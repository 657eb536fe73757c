#pragma once

#include <cstddef>

namespace mznav::nn {

inline int conv_out_dim(int in, int k, int s, int pad) {
  return (in + 2 * pad - k) / s + 1;
}

// Lowers one channel-last sample {H, W, C} to a patch matrix of shape
// {oh * ow, k * k * C} (row-major). Patch elements are ordered (kh, kw, c),
// matching a {oc, k, k, c} weight tensor flattened per output channel.
// Out-of-bounds taps (padding) contribute zero.
template <typename T>
void im2col(const T* in, int h, int w, int c, int k, int s, int pad, T* cols) {
  const int oh = conv_out_dim(h, k, s, pad);
  const int ow = conv_out_dim(w, k, s, pad);
  std::size_t idx = 0;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int y0 = oy * s - pad;
      const int x0 = ox * s - pad;
      for (int ky = 0; ky < k; ++ky) {
        const int y = y0 + ky;
        for (int kx = 0; kx < k; ++kx) {
          const int x = x0 + kx;
          if (y >= 0 && y < h && x >= 0 && x < w) {
            const T* src = in + (static_cast<std::size_t>(y) * w + x) * c;
            for (int ch = 0; ch < c; ++ch) cols[idx++] = src[ch];
          } else {
            for (int ch = 0; ch < c; ++ch) cols[idx++] = T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds a patch matrix back onto the {H, W, C}
// canvas. The canvas is not cleared; callers zero it first.
template <typename T>
void col2im(const T* cols, int h, int w, int c, int k, int s, int pad,
            T* in_accum) {
  const int oh = conv_out_dim(h, k, s, pad);
  const int ow = conv_out_dim(w, k, s, pad);
  std::size_t idx = 0;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int y0 = oy * s - pad;
      const int x0 = ox * s - pad;
      for (int ky = 0; ky < k; ++ky) {
        const int y = y0 + ky;
        for (int kx = 0; kx < k; ++kx) {
          const int x = x0 + kx;
          if (y >= 0 && y < h && x >= 0 && x < w) {
            T* dst = in_accum + (static_cast<std::size_t>(y) * w + x) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] += cols[idx++];
          } else {
            idx += static_cast<std::size_t>(c);
          }
        }
      }
    }
  }
}

}  // namespace mznav::nn
