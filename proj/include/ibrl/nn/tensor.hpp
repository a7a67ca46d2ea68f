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

// Minimal reverse-mode automatic differentiation.
//
// A Tensor is a shared handle to a value buffer and a lazily allocated
// gradient buffer. Operations take a Tape, compute their output eagerly and,
// when any input requires a gradient, push a backward closure. Tape::backward
// replays the closures in exact reverse order of recording.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ibrl/error.hpp"

namespace ibrl::nn {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->value.assign(shape_numel(shape), T(0));
    t.s_->shape = std::move(shape);
    t.s_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    require(values.size() == shape_numel(shape), "Tensor::from: value count does not match shape " +
                                                     shape_string(shape));
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->value = std::move(values);
    t.s_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  int dim(int i) const { return s_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(s_->shape.size()); }
  std::size_t numel() const { return s_->value.size(); }

  // Tensors are handles to shared storage, so element access does not depend
  // on the constness of the handle.
  std::span<T> value() const { return s_->value; }
  T item() const {
    require(numel() == 1, "Tensor::item: tensor is not a scalar");
    return s_->value[0];
  }

  bool has_grad() const { return !s_->grad.empty(); }
  // Gradient accumulator, allocated as zeros on first access.
  std::span<T> grad() const {
    if (s_->grad.empty()) s_->grad.assign(numel(), T(0));
    return s_->grad;
  }
  void zero_grad() const { std::fill(s_->grad.begin(), s_->grad.end(), T(0)); }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) { s_->requires_grad = on; }

  // Independent copy of the values with no gradient history.
  Tensor detach() const { return from(shape(), s_->value, false); }

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

template <class T>
class Tape {
 public:
  // A disabled tape records nothing; used for inference.
  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }
  std::size_t size() const { return ops_.size(); }

  bool wants_grad(std::initializer_list<const Tensor<T>*> inputs) const {
    if (!enabled_) return false;
    for (const auto* t : inputs)
      if (t && t->defined() && t->requires_grad()) return true;
    return false;
  }

  void record(std::function<void()> backward) { ops_.push_back(std::move(backward)); }

  // Seeds d(loss)/d(loss) = 1 and replays the recorded closures newest first.
  // The tape is cleared afterwards.
  void backward(Tensor<T>& loss) {
    require(loss.numel() == 1, "Tape::backward: loss must be a scalar");
    require(loss.requires_grad(), "Tape::backward: loss does not depend on any parameter");
    loss.grad()[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

  void clear() { ops_.clear(); }

 private:
  bool enabled_;
  std::vector<std::function<void()>> ops_;
};

// Output tensor that requires a gradient iff recording is active.
template <class T>
Tensor<T> make_output(Shape shape, bool track) {
  return Tensor<T>::zeros(std::move(shape), track);
}

// ---------------------------------------------------------------------------
// Elementwise ops.

namespace detail {

template <class T, class Fwd, class Bwd>
Tensor<T> unary(Tape<T>& tape, const Tensor<T>& x, Fwd fwd, Bwd dfdx) {
  const bool track = tape.wants_grad({&x});
  Tensor<T> y = make_output<T>(x.shape(), track);
  auto xv = x.value();
  auto yv = y.value();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = fwd(xv[i]);
  if (track) {
    tape.record([x, y, dfdx]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gx = x.grad();
      auto xv = x.value();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dfdx(xv[i]);
    });
  }
  return y;
}

}  // namespace detail

template <class T>
Tensor<T> relu6(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, x, [](T v) { return std::min(std::max(v, T(0)), T(6)); },
      [](T v) { return (v > T(0) && v < T(6)) ? T(1) : T(0); });
}

template <class T>
Tensor<T> elu(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, x, [](T v) { return v > T(0) ? v : std::expm1(v); },
      [](T v) { return v > T(0) ? T(1) : std::exp(v); });
}

template <class T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  auto f = [](T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  };
  return detail::unary(tape, x, f, [f](T v) {
    const T s = f(v);
    return s * (T(1) - s);
  });
}

// Soft clip at 1: 1 - log(1 + exp(-n (x - 1))) / n.
template <class T>
Tensor<T> soft_clip(Tape<T>& tape, const Tensor<T>& x, T sharpness = T(40)) {
  return detail::unary(
      tape, x,
      [sharpness](T v) {
        const T z = sharpness * (v - T(1));
        if (z < T(0)) return v - std::log1p(std::exp(z)) / sharpness;
        return T(1) - std::log1p(std::exp(-z)) / sharpness;
      },
      [sharpness](T v) {
        const T z = sharpness * (T(1) - v);
        if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
        const T e = std::exp(z);
        return e / (T(1) + e);
      });
}

// max(x, 0)^(1/gamma).
template <class T>
Tensor<T> gamma_encode(Tape<T>& tape, const Tensor<T>& x, T gamma = T(2.2)) {
  return detail::unary(
      tape, x, [gamma](T v) { return v > T(0) ? std::pow(v, T(1) / gamma) : T(0); },
      [gamma](T v) { return v > T(0) ? std::pow(v, T(1) / gamma - T(1)) / gamma : T(0); });
}

// log(clamp(x, lo, hi)); gradient 0 where the clamp is active.
template <class T>
Tensor<T> log_clamped(Tape<T>& tape, const Tensor<T>& x, T lo, T hi) {
  return detail::unary(
      tape, x, [lo, hi](T v) { return std::log(std::clamp(v, lo, hi)); },
      [lo, hi](T v) { return (v > lo && v < hi) ? T(1) / v : T(0); });
}

// log(1 - clamp(x, lo, hi)).
template <class T>
Tensor<T> log1m_clamped(Tape<T>& tape, const Tensor<T>& x, T lo, T hi) {
  return detail::unary(
      tape, x, [lo, hi](T v) { return std::log1p(-std::clamp(v, lo, hi)); },
      [lo, hi](T v) { return (v > lo && v < hi) ? T(-1) / (T(1) - v) : T(0); });
}

template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T s) {
  return detail::unary(
      tape, x, [s](T v) { return v * s; }, [s](T) { return s; });
}

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
  const bool track = tape.wants_grad({&a, &b});
  Tensor<T> y = make_output<T>(a.shape(), track);
  for (std::size_t i = 0; i < y.numel(); ++i) y.value()[i] = a.value()[i] + b.value()[i];
  if (track) {
    tape.record([a, b, y]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      }
    });
  }
  return y;
}

// Mean of all elements as a scalar tensor.
template <class T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x) {
  const bool track = tape.wants_grad({&x});
  Tensor<T> y = make_output<T>({1}, track);
  T acc = T(0);
  for (T v : x.value()) acc += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  y.value()[0] = acc * inv;
  if (track) {
    tape.record([x, y, inv]() mutable {
      if (!y.has_grad()) return;
      const T g = y.grad()[0] * inv;
      for (T& gx : x.grad()) gx += g;
    });
  }
  return y;
}

// Same values under a new shape with the same element count.
template <class T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), "reshape: element count mismatch");
  const bool track = tape.wants_grad({&x});
  Tensor<T> y = Tensor<T>::from(std::move(shape), std::vector<T>(x.value().begin(), x.value().end()),
                                track);
  if (track) {
    tape.record([x, y]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    });
  }
  return y;
}

// Multiplies every [.., H, W, C] image in the batch by a fixed H*W mask.
template <class T>
Tensor<T> mask_pixels(Tape<T>& tape, const Tensor<T>& x, std::span<const T> mask) {
  require(x.rank() == 4 && mask.size() == static_cast<std::size_t>(x.dim(1)) * x.dim(2),
          "mask_pixels: mask does not match the image size");
  const bool track = tape.wants_grad({&x});
  Tensor<T> y = make_output<T>(x.shape(), track);
  const int c = x.dim(3);
  const std::size_t pixels = mask.size();
  std::vector<T> m(mask.begin(), mask.end());
  for (std::size_t i = 0; i < x.numel(); ++i) y.value()[i] = x.value()[i] * m[(i / c) % pixels];
  if (track) {
    tape.record([x, y, m, c, pixels]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * m[(i / c) % pixels];
    });
  }
  return y;
}

// Alpha blend alpha * x + (1 - alpha) * plate with a per-pixel alpha shared by
// the batch and a constant plate of the same shape as x.
template <class T>
Tensor<T> composite(Tape<T>& tape, const Tensor<T>& x, std::span<const T> alpha,
                    std::span<const T> plate) {
  require(x.rank() == 4 && alpha.size() == static_cast<std::size_t>(x.dim(1)) * x.dim(2) &&
              plate.size() == x.numel(),
          "composite: alpha or plate does not match the sphere batch");
  const bool track = tape.wants_grad({&x});
  Tensor<T> y = make_output<T>(x.shape(), track);
  const int c = x.dim(3);
  const std::size_t pixels = alpha.size();
  std::vector<T> a(alpha.begin(), alpha.end());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T w = a[(i / c) % pixels];
    y.value()[i] = w * x.value()[i] + (T(1) - w) * plate[i];
  }
  if (track) {
    tape.record([x, y, a, c, pixels]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * a[(i / c) % pixels];
    });
  }
  return y;
}

// Mean absolute difference to a constant target over masked pixels of every
// [N, H, W, C] image. The subgradient at a zero residual is 0.
template <class T>
Tensor<T> masked_l1(Tape<T>& tape, const Tensor<T>& x, std::span<const T> target,
                    std::span<const std::uint8_t> mask) {
  require(x.rank() == 4 && target.size() == x.numel() &&
              mask.size() == static_cast<std::size_t>(x.dim(1)) * x.dim(2),
          "masked_l1: target or mask does not match");
  const bool track = tape.wants_grad({&x});
  Tensor<T> y = make_output<T>({1}, track);
  const int c = x.dim(3);
  const std::size_t pixels = mask.size();
  std::size_t count = 0;
  T acc = T(0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!mask[(i / c) % pixels]) continue;
    acc += std::abs(x.value()[i] - target[i]);
    ++count;
  }
  require(count > 0, "masked_l1: mask selects no pixels");
  const T inv = T(1) / static_cast<T>(count);
  y.value()[0] = acc * inv;
  if (track) {
    std::vector<T> t(target.begin(), target.end());
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    tape.record([x, y, t, m, c, pixels, inv]() mutable {
      if (!y.has_grad()) return;
      const T g = y.grad()[0] * inv;
      auto gx = x.grad();
      auto xv = x.value();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (!m[(i / c) % pixels]) continue;
        const T r = xv[i] - t[i];
        gx[i] += r > T(0) ? g : (r < T(0) ? -g : T(0));
      }
    });
  }
  return y;
}

// sum_k w_k * x_k over scalar tensors.
template <class T>
Tensor<T> weighted_sum(Tape<T>& tape, const std::vector<Tensor<T>>& xs, const std::vector<T>& ws) {
  require(xs.size() == ws.size() && !xs.empty(), "weighted_sum: size mismatch");
  bool track = false;
  T acc = T(0);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    require(xs[k].numel() == 1, "weighted_sum: inputs must be scalars");
    track = track || tape.wants_grad({&xs[k]});
    acc += ws[k] * xs[k].value()[0];
  }
  Tensor<T> y = make_output<T>({1}, track);
  y.value()[0] = acc;
  if (track) {
    tape.record([xs, ws, y]() mutable {
      if (!y.has_grad()) return;
      const T g = y.grad()[0];
      for (std::size_t k = 0; k < xs.size(); ++k)
        if (xs[k].requires_grad()) xs[k].grad()[0] += ws[k] * g;
    });
  }
  return y;
}

}  // namespace ibrl::nn
