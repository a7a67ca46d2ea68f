// Copyright 2026 The IBRL Lighting Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Convolution, dense, resampling and normalization ops on NHWC tensors.
// Convolutions are cross-correlations with TensorFlow-style "same" padding:
// out = ceil(in / stride), and any odd padding goes to the bottom/right.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ibrl/error.hpp"
#include "ibrl/nn/tensor.hpp"

namespace ibrl::nn {

namespace detail {

struct ConvGeometry {
  int n, h, w, ci, co, kh, kw, stride, oh, ow, pad_top, pad_left;
};

inline ConvGeometry conv_geometry(const Shape& x, int kh, int kw, int co, int stride) {
  ConvGeometry g{};
  g.n = x[0];
  g.h = x[1];
  g.w = x[2];
  g.ci = x[3];
  g.co = co;
  g.kh = kh;
  g.kw = kw;
  g.stride = stride;
  g.oh = (g.h + stride - 1) / stride;
  g.ow = (g.w + stride - 1) / stride;
  g.pad_top = std::max((g.oh - 1) * stride + kh - g.h, 0) / 2;
  g.pad_left = std::max((g.ow - 1) * stride + kw - g.w, 0) / 2;
  return g;
}

// Dot product with independent partial sums so the compiler can vectorize.
template <class T>
T dot(const T* a, const T* b, int n) {
  T acc[8] = {};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Dense convolution; kernel layout [kh, kw, ci, co].
template <class T>
Tensor<T> conv_dense(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                     int kh, int kw, int co, int stride) {
  require(x.rank() == 4, "conv2d: input must be NHWC");
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(w.numel() == static_cast<std::size_t>(kh) * kw * x.dim(3) * co,
          "conv2d: kernel does not match the input channel count");
  require(!b.defined() || b.numel() == static_cast<std::size_t>(co), "conv2d: bias size mismatch");
  const ConvGeometry g = conv_geometry(x.shape(), kh, kw, co, stride);
  const bool track = tape.wants_grad({&x, &w, &b});
  Tensor<T> y = make_output<T>({g.n, g.oh, g.ow, g.co}, track);

  const T* xv = x.value().data();
  const T* wv = w.value().data();
  T* yv = y.value().data();
  for (int n = 0; n < g.n; ++n) {
    for (int oy = 0; oy < g.oh; ++oy) {
      for (int ox = 0; ox < g.ow; ++ox) {
        T* out = yv + ((static_cast<std::size_t>(n) * g.oh + oy) * g.ow + ox) * g.co;
        if (b.defined()) std::copy_n(b.value().data(), g.co, out);
        for (int ky = 0; ky < g.kh; ++ky) {
          const int iy = oy * g.stride + ky - g.pad_top;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.kw; ++kx) {
            const int ix = ox * g.stride + kx - g.pad_left;
            if (ix < 0 || ix >= g.w) continue;
            const T* in = xv + ((static_cast<std::size_t>(n) * g.h + iy) * g.w + ix) * g.ci;
            const T* k = wv + (static_cast<std::size_t>(ky) * g.kw + kx) * g.ci * g.co;
            for (int ci = 0; ci < g.ci; ++ci) {
              const T a = in[ci];
              if (a == T(0)) continue;
              const T* kr = k + static_cast<std::size_t>(ci) * g.co;
              for (int c = 0; c < g.co; ++c) out[c] += a * kr[c];
            }
          }
        }
      }
    }
  }

  if (track) {
    tape.record([x, w, b, y, g]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad().data();
      const T* xv = x.value().data();
      const bool need_x = x.requires_grad();
      const bool need_w = w.requires_grad();
      T* gx = need_x ? x.grad().data() : nullptr;
      T* gw = need_w ? w.grad().data() : nullptr;
      if (b.defined() && b.requires_grad()) {
        T* gb = b.grad().data();
        for (std::size_t i = 0; i < y.numel(); i += g.co)
          for (int c = 0; c < g.co; ++c) gb[c] += gy[i + c];
      }
      // Transposed kernel [kh, kw, co, ci] for the input gradient.
      std::vector<T> wt;
      if (need_x) {
        const T* wv = w.value().data();
        wt.resize(w.numel());
        for (int k = 0; k < g.kh * g.kw; ++k)
          for (int ci = 0; ci < g.ci; ++ci)
            for (int c = 0; c < g.co; ++c)
              wt[(static_cast<std::size_t>(k) * g.co + c) * g.ci + ci] =
                  wv[(static_cast<std::size_t>(k) * g.ci + ci) * g.co + c];
      }
      for (int n = 0; n < g.n; ++n) {
        for (int oy = 0; oy < g.oh; ++oy) {
          for (int ox = 0; ox < g.ow; ++ox) {
            const T* go = gy + ((static_cast<std::size_t>(n) * g.oh + oy) * g.ow + ox) * g.co;
            for (int ky = 0; ky < g.kh; ++ky) {
              const int iy = oy * g.stride + ky - g.pad_top;
              if (iy < 0 || iy >= g.h) continue;
              for (int kx = 0; kx < g.kw; ++kx) {
                const int ix = ox * g.stride + kx - g.pad_left;
                if (ix < 0 || ix >= g.w) continue;
                const std::size_t in_off = ((static_cast<std::size_t>(n) * g.h + iy) * g.w + ix) * g.ci;
                const std::size_t k = static_cast<std::size_t>(ky) * g.kw + kx;
                if (need_w) {
                  const T* in = xv + in_off;
                  T* gk = gw + k * g.ci * g.co;
                  for (int ci = 0; ci < g.ci; ++ci) {
                    const T a = in[ci];
                    if (a == T(0)) continue;
                    T* row = gk + static_cast<std::size_t>(ci) * g.co;
                    for (int c = 0; c < g.co; ++c) row[c] += a * go[c];
                  }
                }
                if (need_x) {
                  T* gi = gx + in_off;
                  const T* kt = wt.data() + k * g.co * g.ci;
                  for (int c = 0; c < g.co; ++c) {
                    const T d = go[c];
                    if (d == T(0)) continue;
                    const T* row = kt + static_cast<std::size_t>(c) * g.ci;
                    for (int ci = 0; ci < g.ci; ++ci) gi[ci] += d * row[ci];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return y;
}

}  // namespace detail

// Kernel [kh, kw, ci, co]; bias [co] may be undefined.
template <class T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride) {
  require(kernel.rank() == 4 && kernel.dim(2) == x.dim(3),
          "conv2d: kernel " + shape_string(kernel.shape()) + " does not match input " +
              shape_string(x.shape()));
  return detail::conv_dense(tape, x, kernel, bias, kernel.dim(0), kernel.dim(1), kernel.dim(3), stride);
}

// 1x1 convolution; kernel [ci, co].
template <class T>
Tensor<T> pointwise_conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel,
                           const Tensor<T>& bias) {
  require(kernel.rank() == 2 && kernel.dim(0) == x.dim(3),
          "pointwise_conv2d: kernel " + shape_string(kernel.shape()) + " does not match input " +
              shape_string(x.shape()));
  return detail::conv_dense(tape, x, kernel, bias, 1, 1, kernel.dim(1), 1);
}

// Per-channel convolution with multiplier 1; kernel [kh, kw, c].
template <class T>
Tensor<T> depthwise_conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel,
                           const Tensor<T>& bias, int stride) {
  require(x.rank() == 4 && kernel.rank() == 3 && kernel.dim(2) == x.dim(3),
          "depthwise_conv2d: kernel " + shape_string(kernel.shape()) + " does not match input " +
              shape_string(x.shape()));
  require(stride >= 1, "depthwise_conv2d: stride must be >= 1");
  require(!bias.defined() || bias.numel() == static_cast<std::size_t>(x.dim(3)),
          "depthwise_conv2d: bias size mismatch");
  const detail::ConvGeometry g =
      detail::conv_geometry(x.shape(), kernel.dim(0), kernel.dim(1), x.dim(3), stride);
  const bool track = tape.wants_grad({&x, &kernel, &bias});
  Tensor<T> y = make_output<T>({g.n, g.oh, g.ow, g.co}, track);
  const T* xv = x.value().data();
  const T* wv = kernel.value().data();
  T* yv = y.value().data();
  const int c = g.ci;
  for (int n = 0; n < g.n; ++n)
    for (int oy = 0; oy < g.oh; ++oy)
      for (int ox = 0; ox < g.ow; ++ox) {
        T* out = yv + ((static_cast<std::size_t>(n) * g.oh + oy) * g.ow + ox) * c;
        if (bias.defined()) std::copy_n(bias.value().data(), c, out);
        for (int ky = 0; ky < g.kh; ++ky) {
          const int iy = oy * g.stride + ky - g.pad_top;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.kw; ++kx) {
            const int ix = ox * g.stride + kx - g.pad_left;
            if (ix < 0 || ix >= g.w) continue;
            const T* in = xv + ((static_cast<std::size_t>(n) * g.h + iy) * g.w + ix) * c;
            const T* k = wv + (static_cast<std::size_t>(ky) * g.kw + kx) * c;
            for (int ch = 0; ch < c; ++ch) out[ch] += in[ch] * k[ch];
          }
        }
      }
  if (track) {
    tape.record([x, kernel, bias, y, g]() mutable {
      if (!y.has_grad()) return;
      const int c = g.ci;
      const T* gy = y.grad().data();
      const T* xv = x.value().data();
      const T* wv = kernel.value().data();
      T* gx = x.requires_grad() ? x.grad().data() : nullptr;
      T* gw = kernel.requires_grad() ? kernel.grad().data() : nullptr;
      if (bias.defined() && bias.requires_grad()) {
        T* gb = bias.grad().data();
        for (std::size_t i = 0; i < y.numel(); i += c)
          for (int ch = 0; ch < c; ++ch) gb[ch] += gy[i + ch];
      }
      for (int n = 0; n < g.n; ++n)
        for (int oy = 0; oy < g.oh; ++oy)
          for (int ox = 0; ox < g.ow; ++ox) {
            const T* go = gy + ((static_cast<std::size_t>(n) * g.oh + oy) * g.ow + ox) * c;
            for (int ky = 0; ky < g.kh; ++ky) {
              const int iy = oy * g.stride + ky - g.pad_top;
              if (iy < 0 || iy >= g.h) continue;
              for (int kx = 0; kx < g.kw; ++kx) {
                const int ix = ox * g.stride + kx - g.pad_left;
                if (ix < 0 || ix >= g.w) continue;
                const std::size_t in_off = ((static_cast<std::size_t>(n) * g.h + iy) * g.w + ix) * c;
                const std::size_t k_off = (static_cast<std::size_t>(ky) * g.kw + kx) * c;
                if (gw)
                  for (int ch = 0; ch < c; ++ch) gw[k_off + ch] += xv[in_off + ch] * go[ch];
                if (gx)
                  for (int ch = 0; ch < c; ++ch) gx[in_off + ch] += wv[k_off + ch] * go[ch];
              }
            }
          }
    });
  }
  return y;
}

// x [N, F] times weights [F, O] plus bias [O].
template <class T>
Tensor<T> fully_connected(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weights,
                          const Tensor<T>& bias) {
  require(x.rank() == 2 && weights.rank() == 2 && weights.dim(0) == x.dim(1),
          "fully_connected: weights " + shape_string(weights.shape()) + " do not match input " +
              shape_string(x.shape()));
  const int n = x.dim(0), f = x.dim(1), o = weights.dim(1);
  require(!bias.defined() || bias.numel() == static_cast<std::size_t>(o),
          "fully_connected: bias size mismatch");
  const bool track = tape.wants_grad({&x, &weights, &bias});
  Tensor<T> y = make_output<T>({n, o}, track);
  const T* xv = x.value().data();
  const T* wv = weights.value().data();
  T* yv = y.value().data();
  for (int s = 0; s < n; ++s) {
    T* out = yv + static_cast<std::size_t>(s) * o;
    if (bias.defined()) std::copy_n(bias.value().data(), o, out);
    for (int i = 0; i < f; ++i) {
      const T a = xv[static_cast<std::size_t>(s) * f + i];
      if (a == T(0)) continue;
      const T* row = wv + static_cast<std::size_t>(i) * o;
      for (int k = 0; k < o; ++k) out[k] += a * row[k];
    }
  }
  if (track) {
    tape.record([x, weights, bias, y, n, f, o]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad().data();
      const T* xv = x.value().data();
      const T* wv = weights.value().data();
      if (bias.defined() && bias.requires_grad()) {
        T* gb = bias.grad().data();
        for (int s = 0; s < n; ++s)
          for (int k = 0; k < o; ++k) gb[k] += gy[static_cast<std::size_t>(s) * o + k];
      }
      if (weights.requires_grad()) {
        T* gw = weights.grad().data();
        for (int s = 0; s < n; ++s) {
          const T* go = gy + static_cast<std::size_t>(s) * o;
          for (int i = 0; i < f; ++i) {
            const T a = xv[static_cast<std::size_t>(s) * f + i];
            if (a == T(0)) continue;
            T* row = gw + static_cast<std::size_t>(i) * o;
            for (int k = 0; k < o; ++k) row[k] += a * go[k];
          }
        }
      }
      if (x.requires_grad()) {
        T* gx = x.grad().data();
        for (int s = 0; s < n; ++s) {
          const T* go = gy + static_cast<std::size_t>(s) * o;
          for (int i = 0; i < f; ++i)
            gx[static_cast<std::size_t>(s) * f + i] += detail::dot(wv + static_cast<std::size_t>(i) * o, go, o);
        }
      }
    });
  }
  return y;
}

namespace detail {

struct UpsampleTap {
  int i0, i1;
  double w0, w1;
};

// Source taps for 2x bilinear upsampling with half-pixel centers
// (align_corners = false), clamped at the borders.
inline std::vector<UpsampleTap> upsample_taps(int in) {
  std::vector<UpsampleTap> taps(static_cast<std::size_t>(2 * in));
  for (int o = 0; o < 2 * in; ++o) {
    const double src = std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    const double f = src - i0;
    taps[o] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

}  // namespace detail

template <class T>
Tensor<T> bilinear_upsample_2x(Tape<T>& tape, const Tensor<T>& x) {
  require(x.rank() == 4, "bilinear_upsample_2x: input must be NHWC");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const auto ty = detail::upsample_taps(h);
  const auto tx = detail::upsample_taps(w);
  const bool track = tape.wants_grad({&x});
  Tensor<T> y = make_output<T>({n, 2 * h, 2 * w, c}, track);
  auto at = [&](int s, int yy, int xx) {
    return (static_cast<std::size_t>(s) * h + yy) * w * c + static_cast<std::size_t>(xx) * c;
  };
  const T* xv = x.value().data();
  T* yv = y.value().data();
  for (int s = 0; s < n; ++s)
    for (int oy = 0; oy < 2 * h; ++oy)
      for (int ox = 0; ox < 2 * w; ++ox) {
        const auto& a = ty[oy];
        const auto& b = tx[ox];
        T* out = yv + ((static_cast<std::size_t>(s) * 2 * h + oy) * 2 * w + ox) * c;
        const T w00 = static_cast<T>(a.w0 * b.w0), w01 = static_cast<T>(a.w0 * b.w1);
        const T w10 = static_cast<T>(a.w1 * b.w0), w11 = static_cast<T>(a.w1 * b.w1);
        const T* p00 = xv + at(s, a.i0, b.i0);
        const T* p01 = xv + at(s, a.i0, b.i1);
        const T* p10 = xv + at(s, a.i1, b.i0);
        const T* p11 = xv + at(s, a.i1, b.i1);
        for (int ch = 0; ch < c; ++ch)
          out[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
      }
  if (track) {
    tape.record([x, y, ty, tx, n, h, w, c]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad().data();
      T* gx = x.grad().data();
      for (int s = 0; s < n; ++s)
        for (int oy = 0; oy < 2 * h; ++oy)
          for (int ox = 0; ox < 2 * w; ++ox) {
            const auto& a = ty[oy];
            const auto& b = tx[ox];
            const T* go = gy + ((static_cast<std::size_t>(s) * 2 * h + oy) * 2 * w + ox) * c;
            auto acc = [&](int yy, int xx, double wt) {
              T* dst = gx + ((static_cast<std::size_t>(s) * h + yy) * w + xx) * c;
              const T tw = static_cast<T>(wt);
              for (int ch = 0; ch < c; ++ch) dst[ch] += tw * go[ch];
            };
            acc(a.i0, b.i0, a.w0 * b.w0);
            acc(a.i0, b.i1, a.w0 * b.w1);
            acc(a.i1, b.i0, a.w1 * b.w0);
            acc(a.i1, b.i1, a.w1 * b.w1);
          }
    });
  }
  return y;
}

// Learned scale/shift plus running statistics for batch normalization over all
// axes but the last.
template <class T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;  // buffers: no gradient
  Tensor<T> running_var;
  T momentum = T(0.99);
  T epsilon = T(1e-5);

  static BatchNormState make(int channels) {
    BatchNormState s;
    s.gamma = Tensor<T>::from({channels}, std::vector<T>(channels, T(1)), true);
    s.beta = Tensor<T>::zeros({channels}, true);
    s.running_mean = Tensor<T>::zeros({channels});
    s.running_var = Tensor<T>::from({channels}, std::vector<T>(channels, T(1)));
    return s;
  }
};

// Training mode normalizes with biased batch statistics and folds them into the
// running averages; inference mode uses the running averages.
template <class T>
Tensor<T> batch_norm(Tape<T>& tape, const Tensor<T>& x, BatchNormState<T>& state, bool training) {
  const int c = x.shape().back();
  require(state.gamma.numel() == static_cast<std::size_t>(c), "batch_norm: channel mismatch");
  const std::size_t m = x.numel() / c;
  require(m > 0, "batch_norm: empty input");
  std::vector<T> mean(c, T(0)), var(c, T(0));
  const T* xv = x.value().data();
  if (training) {
    std::vector<double> acc(c, 0.0), acc2(c, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch) acc[ch] += xv[i * c + ch];
    for (int ch = 0; ch < c; ++ch) mean[ch] = static_cast<T>(acc[ch] / static_cast<double>(m));
    for (std::size_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const double d = xv[i * c + ch] - mean[ch];
        acc2[ch] += d * d;
      }
    for (int ch = 0; ch < c; ++ch) var[ch] = static_cast<T>(acc2[ch] / static_cast<double>(m));
    auto rm = state.running_mean.value();
    auto rv = state.running_var.value();
    for (int ch = 0; ch < c; ++ch) {
      rm[ch] = state.momentum * rm[ch] + (T(1) - state.momentum) * mean[ch];
      rv[ch] = state.momentum * rv[ch] + (T(1) - state.momentum) * var[ch];
    }
  } else {
    std::copy_n(state.running_mean.value().data(), c, mean.data());
    std::copy_n(state.running_var.value().data(), c, var.data());
  }
  std::vector<T> inv_std(c);
  for (int ch = 0; ch < c; ++ch) inv_std[ch] = T(1) / std::sqrt(var[ch] + state.epsilon);

  const Tensor<T>& gamma = state.gamma;
  const Tensor<T>& beta = state.beta;
  const bool track = tape.wants_grad({&x, &gamma, &beta});
  Tensor<T> y = make_output<T>(x.shape(), track);
  std::vector<T> xhat(x.numel());
  T* yv = y.value().data();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t k = i * c + ch;
      xhat[k] = (xv[k] - mean[ch]) * inv_std[ch];
      yv[k] = gv[ch] * xhat[k] + bv[ch];
    }
  if (track) {
    tape.record([x, gamma, beta, y, xhat = std::move(xhat), inv_std, m, c, training]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad().data();
      const T* gv = gamma.value().data();
      std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (int ch = 0; ch < c; ++ch) {
          sum_dy[ch] += gy[i * c + ch];
          sum_dy_xhat[ch] += gy[i * c + ch] * xhat[i * c + ch];
        }
      if (gamma.requires_grad()) {
        T* gg = gamma.grad().data();
        for (int ch = 0; ch < c; ++ch) gg[ch] += static_cast<T>(sum_dy_xhat[ch]);
      }
      if (beta.requires_grad()) {
        T* gb = beta.grad().data();
        for (int ch = 0; ch < c; ++ch) gb[ch] += static_cast<T>(sum_dy[ch]);
      }
      if (x.requires_grad()) {
        T* gx = x.grad().data();
        if (training) {
          const T inv_m = T(1) / static_cast<T>(m);
          for (std::size_t i = 0; i < m; ++i)
            for (int ch = 0; ch < c; ++ch) {
              const std::size_t k = i * c + ch;
              gx[k] += gv[ch] * inv_std[ch] * inv_m *
                       (static_cast<T>(m) * gy[k] - static_cast<T>(sum_dy[ch]) -
                        xhat[k] * static_cast<T>(sum_dy_xhat[ch]));
            }
        } else {
          for (std::size_t i = 0; i < m; ++i)
            for (int ch = 0; ch < c; ++ch) gx[i * c + ch] += gy[i * c + ch] * gv[ch] * inv_std[ch];
        }
      }
    });
  }
  return y;
}

}  // namespace ibrl::nn
