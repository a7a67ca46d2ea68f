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

// Differentiable image-based relighting: render = sum_i R_i exp(Q_i), then a
// soft clip at 1.0, gamma encoding, and a masked multi-BRDF L1 loss.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "ibrl/error.hpp"
#include "ibrl/image.hpp"
#include "ibrl/probe_geometry.hpp"
#include "ibrl/reflectance_basis.hpp"

namespace ibrl {

inline constexpr double kSoftClipSharpness = 40.0;
inline constexpr double kGamma = 2.2;

enum class ProbeSpace { kLog, kLinear };

// Probe image on a mirror-ball layout; invalid (corner) pixels are exactly 0.
struct Probe {
  ImageD values;  // resolution x resolution x 3
  ProbeSpace space = ProbeSpace::kLog;

  int resolution() const { return values.width(); }

  static Probe zeros(int resolution, ProbeSpace space) {
    return Probe{ImageD(resolution, resolution, 3), space};
  }
};

inline void mask_probe(Probe& probe, const ProbeLayout& layout) {
  require(probe.resolution() == layout.resolution, "mask_probe: layout mismatch");
  for (int p = 0; p < layout.pixel_count(); ++p) {
    if (layout.valid(p)) continue;
    for (int c = 0; c < 3; ++c) probe.values(p % layout.resolution, p / layout.resolution, c) = 0.0;
  }
}

inline Probe to_log(const Probe& linear, const ProbeLayout& layout) {
  require(linear.space == ProbeSpace::kLinear, "to_log: probe is not linear");
  Probe out = Probe::zeros(linear.resolution(), ProbeSpace::kLog);
  for (int p : layout.valid_pixels)
    for (int c = 0; c < 3; ++c) {
      const double v = linear.values(p % layout.resolution, p / layout.resolution, c);
      require(v > 0.0, "to_log: linear probe must be positive on valid pixels");
      out.values(p % layout.resolution, p / layout.resolution, c) = std::log(v);
    }
  return out;
}

inline Probe to_linear(const Probe& log_probe, const ProbeLayout& layout) {
  require(log_probe.space == ProbeSpace::kLog, "to_linear: probe is not in log space");
  Probe out = Probe::zeros(log_probe.resolution(), ProbeSpace::kLinear);
  for (int p : layout.valid_pixels)
    for (int c = 0; c < 3; ++c)
      out.values(p % layout.resolution, p / layout.resolution, c) =
          std::exp(log_probe.values(p % layout.resolution, p / layout.resolution, c));
  return out;
}

namespace detail {

inline void check_field_probe(const ReflectanceField& field, const Probe& probe) {
  require(probe.resolution() == field.layout().resolution && probe.values.channels() == 3,
          "relight: probe layout does not match the reflectance field");
}

// Dot product of the field with linear radiance per valid direction.
inline ImageD relight_radiance(const ReflectanceField& field,
                               const std::vector<std::array<double, 3>>& radiance) {
  const int s = field.sphere_resolution();
  ImageD out(s, s, 3);
  auto dst = out.values();
  for (int i = 0; i < field.direction_count(); ++i) {
    for (int p = 0; p < s * s; ++p) {
      for (int c = 0; c < 3; ++c) dst[p * 3 + c] += field.at(i, p, c) * radiance[i][c];
    }
  }
  return out;
}

}  // namespace detail

// Linear render of the sphere under a linear-radiance probe.
inline ImageD relight_linear(const ReflectanceField& field, const Probe& linear_probe) {
  detail::check_field_probe(field, linear_probe);
  require(linear_probe.space == ProbeSpace::kLinear, "relight_linear: probe must be linear");
  const ProbeLayout& layout = field.layout();
  std::vector<std::array<double, 3>> radiance(layout.valid_count());
  for (int i = 0; i < layout.valid_count(); ++i) {
    const int q = layout.valid_pixels[i];
    for (int c = 0; c < 3; ++c) radiance[i][c] = linear_probe.values(q % layout.resolution, q / layout.resolution, c);
  }
  return detail::relight_radiance(field, radiance);
}

// Linear render of the sphere under a log-space probe Q: sum_i R_i exp(Q_i).
inline ImageD relight(const ReflectanceField& field, const Probe& log_probe) {
  detail::check_field_probe(field, log_probe);
  require(log_probe.space == ProbeSpace::kLog, "relight: probe must be in log space");
  const ProbeLayout& layout = field.layout();
  std::vector<std::array<double, 3>> radiance(layout.valid_count());
  for (int i = 0; i < layout.valid_count(); ++i) {
    const int q = layout.valid_pixels[i];
    for (int c = 0; c < 3; ++c)
      radiance[i][c] = std::exp(log_probe.values(q % layout.resolution, q / layout.resolution, c));
  }
  return detail::relight_radiance(field, radiance);
}

// log(1 + exp(z)) without overflow.
template <class T>
T softplus(T z) {
  return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}

template <class T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

// Soft clip: 1 - log(1 + exp(-n (p - 1))) / n. Strictly increasing, below 1.
// Below 1 the equivalent form p - log(1 + exp(n (p - 1))) / n avoids
// cancellation, so small values pass through almost unchanged.
template <class T>
T soft_clip(T p, T sharpness = T(kSoftClipSharpness)) {
  const T z = sharpness * (p - T(1));
  if (z < T(0)) return p - std::log1p(std::exp(z)) / sharpness;
  return T(1) - softplus(-z) / sharpness;
}

template <class T>
T soft_clip_derivative(T p, T sharpness = T(kSoftClipSharpness)) {
  return sigmoid(sharpness * (T(1) - p));
}

// Gamma encoding; the slightly negative soft-clip residue near 0 clamps to 0.
template <class T>
T encode_ldr(T linear, T gamma = T(kGamma)) {
  return linear > T(0) ? std::pow(linear, T(1) / gamma) : T(0);
}

template <class T>
T encode_ldr_derivative(T linear, T gamma = T(kGamma)) {
  return linear > T(0) ? std::pow(linear, T(1) / gamma - T(1)) / gamma : T(0);
}

inline ImageD soft_clip_image(const ImageD& in, double sharpness = kSoftClipSharpness) {
  ImageD out = in;
  for (double& v : out.values()) v = soft_clip(v, sharpness);
  return out;
}

inline ImageD encode_ldr_image(const ImageD& in, double gamma = kGamma) {
  ImageD out = in;
  for (double& v : out.values()) v = encode_ldr(v, gamma);
  return out;
}

// Full render path: soft clip then gamma encode.
inline ImageD render_ldr(const ReflectanceField& field, const Probe& log_probe) {
  return encode_ldr_image(soft_clip_image(relight(field, log_probe)));
}

struct BrdfWeights {
  std::array<double, 3> values{0.2, 0.6, 0.2};  // mirror, diffuse, matte silver

  double operator[](Brdf b) const { return values[static_cast<int>(b)]; }
};

// Mean over masked pixels and channels of |rendered - soft_clip(truth)|.
inline double masked_l1_softclipped(const ImageD& rendered, const SphereImage& truth) {
  require(rendered.width() == truth.resolution() && rendered.height() == truth.resolution() &&
              rendered.channels() == 3 && truth.rgb.channels() == 3,
          "rec_loss: rendered and truth resolutions differ");
  double sum = 0.0;
  std::size_t n = 0;
  const int s = truth.resolution();
  for (int p = 0; p < s * s; ++p) {
    if (!truth.disc.mask[p]) continue;
    for (int c = 0; c < 3; ++c) {
      sum += std::abs(rendered(p % s, p / s, c) - soft_clip<double>(truth.rgb(p % s, p / s, c)));
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

// Weighted masked L1 between rendered LDR spheres and the soft-clipped truth,
// indexed by Brdf.
inline double rec_loss(const std::array<ImageD, 3>& rendered, const std::array<SphereImage, 3>& truth,
                       const BrdfWeights& weights = {}) {
  double loss = 0.0;
  for (int b = 0; b < 3; ++b) loss += weights.values[b] * masked_l1_softclipped(rendered[b], truth[b]);
  return loss;
}

// Analytic dL_rec/dQ by the chain rule through relight, soft clip, gamma and
// the masked L1. The L1 subgradient at a zero residual is 0; invalid probe
// pixels get 0.
inline ImageD rec_loss_grad(const FieldSet& fields, const Probe& log_probe,
                            const std::array<SphereImage, 3>& truth,
                            const BrdfWeights& weights = {}) {
  const ProbeLayout& layout = fields.fields[0].layout();
  const int r = layout.resolution;
  std::vector<std::array<double, 3>> radiance(layout.valid_count());
  for (int i = 0; i < layout.valid_count(); ++i) {
    const int q = layout.valid_pixels[i];
    for (int c = 0; c < 3; ++c) radiance[i][c] = std::exp(log_probe.values(q % r, q / r, c));
  }
  std::vector<std::array<double, 3>> grad(layout.valid_count(), {0.0, 0.0, 0.0});
  for (int b = 0; b < 3; ++b) {
    const ReflectanceField& field = fields.fields[b];
    detail::check_field_probe(field, log_probe);
    const ImageD linear = detail::relight_radiance(field, radiance);
    const SphereImage& t = truth[b];
    const int s = field.sphere_resolution();
    require(t.resolution() == s, "rec_loss_grad: truth resolution mismatch");
    const double count = static_cast<double>(t.disc.count() * 3);
    // dL/d(linear render) per pixel and channel.
    ImageD upstream(s, s, 3);
    for (int p = 0; p < s * s; ++p) {
      if (!t.disc.mask[p]) continue;
      for (int c = 0; c < 3; ++c) {
        const double lin = linear(p % s, p / s, c);
        const double clipped = soft_clip(lin);
        const double residual = encode_ldr(clipped) - soft_clip<double>(t.rgb(p % s, p / s, c));
        const double sign = residual > 0.0 ? 1.0 : (residual < 0.0 ? -1.0 : 0.0);
        upstream(p % s, p / s, c) = weights.values[b] / count * sign *
                                    encode_ldr_derivative(clipped) * soft_clip_derivative(lin);
      }
    }
    for (int i = 0; i < field.direction_count(); ++i)
      for (int p = 0; p < s * s; ++p)
        for (int c = 0; c < 3; ++c) grad[i][c] += upstream(p % s, p / s, c) * field.at(i, p, c);
  }
  ImageD out(r, r, 3);
  for (int i = 0; i < layout.valid_count(); ++i) {
    const int q = layout.valid_pixels[i];
    for (int c = 0; c < 3; ++c) out(q % r, q / r, c) = grad[i][c] * radiance[i][c];
  }
  return out;
}

// Sparse per-pixel form of a reflectance field for fast repeated rendering.
// Row p lists the (probe pixel, rgb weight) pairs with nonzero weight.
template <class T>
struct RelightOperator {
  int probe_resolution = 0;
  int sphere_resolution = 0;
  std::vector<int> row_begin;       // sphere_pixels + 1
  std::vector<int> probe_pixel;     // flat probe pixel index
  std::vector<T> weight;            // 3 per entry

  static RelightOperator build(const ReflectanceField& field) {
    RelightOperator op;
    op.probe_resolution = field.layout().resolution;
    op.sphere_resolution = field.sphere_resolution();
    const int np = field.sphere_pixels();
    op.row_begin.reserve(np + 1);
    op.row_begin.push_back(0);
    for (int p = 0; p < np; ++p) {
      for (int i = 0; i < field.direction_count(); ++i) {
        const double r = field.at(i, p, 0), g = field.at(i, p, 1), b = field.at(i, p, 2);
        if (r == 0.0 && g == 0.0 && b == 0.0) continue;
        op.probe_pixel.push_back(field.layout().valid_pixels[i]);
        op.weight.push_back(static_cast<T>(r));
        op.weight.push_back(static_cast<T>(g));
        op.weight.push_back(static_cast<T>(b));
      }
      op.row_begin.push_back(static_cast<int>(op.probe_pixel.size()));
    }
    return op;
  }

  int sphere_pixels() const { return sphere_resolution * sphere_resolution; }
  int probe_pixels() const { return probe_resolution * probe_resolution; }

  // out[p*3+c] = sum_j w_j,c radiance[probe_pixel_j*3+c]
  void apply(std::span<const T> radiance, std::span<T> out) const {
    for (int p = 0; p < sphere_pixels(); ++p) {
      T acc[3] = {T(0), T(0), T(0)};
      for (int j = row_begin[p]; j < row_begin[p + 1]; ++j) {
        const T* l = radiance.data() + probe_pixel[j] * 3;
        const T* w = weight.data() + j * 3;
        acc[0] += w[0] * l[0];
        acc[1] += w[1] * l[1];
        acc[2] += w[2] * l[2];
      }
      out[p * 3 + 0] = acc[0];
      out[p * 3 + 1] = acc[1];
      out[p * 3 + 2] = acc[2];
    }
  }

  // grad_radiance[probe_pixel_j*3+c] += w_j,c grad_out[p*3+c]
  void apply_transpose(std::span<const T> grad_out, std::span<T> grad_radiance) const {
    for (int p = 0; p < sphere_pixels(); ++p) {
      const T* g = grad_out.data() + p * 3;
      if (g[0] == T(0) && g[1] == T(0) && g[2] == T(0)) continue;
      for (int j = row_begin[p]; j < row_begin[p + 1]; ++j) {
        T* dst = grad_radiance.data() + probe_pixel[j] * 3;
        const T* w = weight.data() + j * 3;
        dst[0] += w[0] * g[0];
        dst[1] += w[1] * g[1];
        dst[2] += w[2] * g[2];
      }
    }
  }
};

}  // namespace ibrl
