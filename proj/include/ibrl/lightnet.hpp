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

// Lighting regression network: an encoder-decoder generator from an LDR
// background to a log-space probe, a small discriminator on composited mirror
// balls, and the joint training loop.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ibrl/error.hpp"
#include "ibrl/image.hpp"
#include "ibrl/nn/adam.hpp"
#include "ibrl/nn/layers.hpp"
#include "ibrl/nn/render_ops.hpp"
#include "ibrl/nn/tensor.hpp"
#include "ibrl/probe_geometry.hpp"
#include "ibrl/reflectance_basis.hpp"
#include "ibrl/relight.hpp"
#include "ibrl/rng.hpp"
#include "ibrl/scene_synth.hpp"

namespace ibrl {

struct GeneratorConfig {
  std::vector<int> encoder_channels{16, 32, 64, 128};  // stem conv, then separable blocks
  int latent_size = 256;
  std::vector<int> decoder_channels{32, 16};  // the third stage always emits 3 channels
  int probe_resolution = 32;
  bool batch_norm = true;

  void validate() const {
    require(!encoder_channels.empty(), "generator: encoder needs at least one layer");
    for (int c : encoder_channels) require(c > 0, "generator: channel counts must be positive");
    require(latent_size > 0, "generator: latent size must be positive");
    require(decoder_channels.size() == 2, "generator: decoder takes exactly two hidden stages");
    require(probe_resolution % 8 == 0 && probe_resolution >= 8,
            "generator: probe resolution must be a multiple of 8");
    const int seed = probe_resolution / 8;
    require(latent_size % (seed * seed) == 0, "generator: latent size must fill the decoder seed grid");
  }
  int seed_resolution() const { return probe_resolution / 8; }
  int seed_channels() const { return latent_size / (seed_resolution() * seed_resolution()); }
  bool operator==(const GeneratorConfig&) const = default;
};

struct DiscriminatorConfig {
  std::vector<int> channels{16, 32, 64};
  int resolution = 32;
  bool batch_norm = true;

  void validate() const {
    require(!channels.empty(), "discriminator: needs at least one conv layer");
    for (int c : channels) require(c > 0, "discriminator: channel counts must be positive");
    require(resolution >= 2, "discriminator: resolution too small");
  }
  bool operator==(const DiscriminatorConfig&) const = default;
};

struct TrainConfig {
  double lr_g = 0.00015;
  double lr_d_ratio = 0.01;  // lr_D = lr_G * ratio
  double lambda_rec = 0.999;
  BrdfWeights weights{};
  int batch_size = 8;
  int steps = 2000;
  std::uint64_t seed = 1;
  bool gan_enabled = true;
  bool flip_augment = true;
  bool non_saturating = false;
  int checkpoint_every = 0;  // 0 = final checkpoint only

  void validate() const {
    require(lr_g > 0.0 && lr_d_ratio > 0.0, "train: learning rates must be positive");
    require(lambda_rec >= 0.0 && lambda_rec <= 1.0, "train: lambda_rec must lie in [0, 1]");
    require(batch_size > 0, "train: batch size must be positive");
    require(steps >= 0 && checkpoint_every >= 0, "train: step counts must be non-negative");
  }
  bool operator==(const TrainConfig& o) const {
    return lr_g == o.lr_g && lr_d_ratio == o.lr_d_ratio && lambda_rec == o.lambda_rec &&
           weights.values == o.weights.values && batch_size == o.batch_size && steps == o.steps &&
           seed == o.seed && gan_enabled == o.gan_enabled && flip_augment == o.flip_augment &&
           non_saturating == o.non_saturating && checkpoint_every == o.checkpoint_every;
  }
};

struct ModelConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainConfig train;
};

// ---------------------------------------------------------------------------
// Parameters.

template <class T>
struct NamedTensor {
  std::string name;
  nn::Tensor<T> tensor;
};

// Owns the named parameters and buffers of one network, in creation order.
template <class T>
class ParamStore {
 public:
  nn::Tensor<T> weight(const std::string& name, nn::Shape shape, int fan_in, Rng& rng) {
    const double sigma = std::sqrt(2.0 / fan_in);
    std::vector<T> v(nn::shape_numel(shape));
    for (T& x : v) x = static_cast<T>(rng.truncated_normal(sigma));
    auto t = nn::Tensor<T>::from(std::move(shape), std::move(v), true);
    params_.push_back({name, t});
    return t;
  }

  nn::Tensor<T> bias(const std::string& name, int n) {
    auto t = nn::Tensor<T>::zeros({n}, true);
    params_.push_back({name, t});
    return t;
  }

  int batch_norm(const std::string& name, int channels) {
    auto s = nn::BatchNormState<T>::make(channels);
    params_.push_back({name + ".gamma", s.gamma});
    params_.push_back({name + ".beta", s.beta});
    buffers_.push_back({name + ".running_mean", s.running_mean});
    buffers_.push_back({name + ".running_var", s.running_var});
    bn_.push_back(s);
    return static_cast<int>(bn_.size()) - 1;
  }

  nn::BatchNormState<T>& bn(int i) { return bn_[static_cast<std::size_t>(i)]; }
  const std::vector<NamedTensor<T>>& params() const { return params_; }
  const std::vector<NamedTensor<T>>& buffers() const { return buffers_; }

  std::vector<nn::Tensor<T>> parameter_tensors() const {
    std::vector<nn::Tensor<T>> out;
    for (const auto& p : params_) out.push_back(p.tensor);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

 private:
  std::vector<NamedTensor<T>> params_;
  std::vector<NamedTensor<T>> buffers_;
  std::vector<nn::BatchNormState<T>> bn_;
};

namespace detail {

enum class LayerKind { kConv, kDepthwise, kPointwise, kDense };
enum class Activation { kNone, kRelu6, kElu };

template <class T>
struct Layer {
  LayerKind kind = LayerKind::kConv;
  nn::Tensor<T> kernel;
  nn::Tensor<T> bias;  // undefined when batch norm follows
  int bn = -1;
  int stride = 1;
  Activation act = Activation::kNone;
};

// Creates a layer; with `normalize` the conv bias is replaced by batch norm.
template <class T>
Layer<T> make_layer(ParamStore<T>& store, Rng& rng, const std::string& name, LayerKind kind, int k,
                    int ci, int co, int stride, bool normalize, Activation act) {
  Layer<T> l;
  l.kind = kind;
  l.stride = stride;
  l.act = act;
  switch (kind) {
    case LayerKind::kConv: l.kernel = store.weight(name + ".kernel", {k, k, ci, co}, k * k * ci, rng); break;
    case LayerKind::kDepthwise: l.kernel = store.weight(name + ".kernel", {k, k, ci}, k * k, rng); break;
    case LayerKind::kPointwise: l.kernel = store.weight(name + ".kernel", {ci, co}, ci, rng); break;
    case LayerKind::kDense: l.kernel = store.weight(name + ".weights", {ci, co}, ci, rng); break;
  }
  if (normalize) l.bn = store.batch_norm(name + ".bn", co);
  else l.bias = store.bias(name + ".bias", co);
  return l;
}

template <class T>
nn::Tensor<T> apply_layer(nn::Tape<T>& tape, ParamStore<T>& store, const Layer<T>& l, const nn::Tensor<T>& x,
                          bool training) {
  nn::Tensor<T> y;
  switch (l.kind) {
    case LayerKind::kConv: y = nn::conv2d(tape, x, l.kernel, l.bias, l.stride); break;
    case LayerKind::kDepthwise: y = nn::depthwise_conv2d(tape, x, l.kernel, l.bias, l.stride); break;
    case LayerKind::kPointwise: y = nn::pointwise_conv2d(tape, x, l.kernel, l.bias); break;
    case LayerKind::kDense: y = nn::fully_connected(tape, x, l.kernel, l.bias); break;
  }
  if (l.bn >= 0) y = nn::batch_norm(tape, y, store.bn(l.bn), training);
  switch (l.act) {
    case Activation::kRelu6: return nn::relu6(tape, y);
    case Activation::kElu: return nn::elu(tape, y);
    case Activation::kNone: return y;
  }
  return y;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generator: background [N, 192, 135, 3] in [-0.5, 0.5] -> log probe [N, R, R, 3].

template <class T>
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorConfig& config, std::uint64_t seed) : config_(config) {
    config.validate();
    Rng rng(seed);
    using detail::Activation;
    using detail::LayerKind;
    const bool bn = config.batch_norm;
    int h = kBackgroundHeight, w = kBackgroundWidth;
    int c = config.encoder_channels[0];
    layers_.push_back(detail::make_layer(store_, rng, "g.enc0", LayerKind::kConv, 3, 3, c, 2, bn, Activation::kRelu6));
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    for (std::size_t i = 1; i < config.encoder_channels.size(); ++i) {
      const int co = config.encoder_channels[i];
      const std::string name = "g.enc" + std::to_string(i);
      layers_.push_back(detail::make_layer(store_, rng, name + ".dw", LayerKind::kDepthwise, 3, c, c, 2, bn,
                                           Activation::kRelu6));
      layers_.push_back(detail::make_layer(store_, rng, name + ".pw", LayerKind::kPointwise, 1, c, co, 1, bn,
                                           Activation::kRelu6));
      c = co;
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    flat_ = h * w * c;
    encoder_layers_ = layers_.size();
    layers_.push_back(detail::make_layer(store_, rng, "g.fc", LayerKind::kDense, 0, flat_, config.latent_size, 1, bn,
                                         Activation::kRelu6));
    int dc = config.seed_channels();
    for (std::size_t i = 0; i < 3; ++i) {
      const bool last = i == 2;
      const int co = last ? 3 : config.decoder_channels[i];
      layers_.push_back(detail::make_layer(store_, rng, "g.dec" + std::to_string(i), LayerKind::kConv, 3, dc, co, 1,
                                           bn && !last, last ? Activation::kNone : Activation::kRelu6));
      dc = co;
    }
    const DiscMask disc = DiscMask::build(config.probe_resolution);
    probe_mask_.assign(disc.mask.begin(), disc.mask.end());
  }

  const GeneratorConfig& config() const { return config_; }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }

  nn::Tensor<T> forward(nn::Tape<T>& tape, const nn::Tensor<T>& x, bool training) {
    if (x.rank() != 4 || x.dim(1) != kBackgroundHeight || x.dim(2) != kBackgroundWidth || x.dim(3) != 3)
      throw UsageError("generator: expected input [N, 192, 135, 3], got " + nn::shape_string(x.shape()));
    const int n = x.dim(0);
    nn::Tensor<T> y = x;
    for (std::size_t i = 0; i < encoder_layers_; ++i) y = detail::apply_layer(tape, store_, layers_[i], y, training);
    y = nn::reshape(tape, y, {n, flat_});
    y = detail::apply_layer(tape, store_, layers_[encoder_layers_], y, training);
    const int s = config_.seed_resolution();
    y = nn::reshape(tape, y, {n, s, s, config_.seed_channels()});
    for (std::size_t i = encoder_layers_ + 1; i < layers_.size(); ++i) {
      y = nn::bilinear_upsample_2x(tape, y);
      y = detail::apply_layer(tape, store_, layers_[i], y, training);
    }
    return nn::mask_pixels(tape, y, std::span<const T>(probe_mask_));
  }

 private:
  GeneratorConfig config_;
  ParamStore<T> store_;
  std::vector<detail::Layer<T>> layers_;
  std::size_t encoder_layers_ = 0;
  int flat_ = 0;
  std::vector<T> probe_mask_;
};

// ---------------------------------------------------------------------------
// Discriminator: composite [N, R, R, 3] -> probability [N, 1].

template <class T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const DiscriminatorConfig& config, std::uint64_t seed) : config_(config) {
    config.validate();
    Rng rng(seed);
    int c = 3, r = config.resolution;
    for (std::size_t i = 0; i < config.channels.size(); ++i) {
      layers_.push_back(detail::make_layer(store_, rng, "d.conv" + std::to_string(i), detail::LayerKind::kConv, 3, c,
                                           config.channels[i], 2, config.batch_norm, detail::Activation::kElu));
      c = config.channels[i];
      r = (r + 1) / 2;
    }
    flat_ = r * r * c;
    head_ = detail::make_layer(store_, rng, "d.fc", detail::LayerKind::kDense, 0, flat_, 1, 1, false,
                               detail::Activation::kNone);
  }

  const DiscriminatorConfig& config() const { return config_; }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }

  nn::Tensor<T> forward(nn::Tape<T>& tape, const nn::Tensor<T>& x, bool training) {
    require(x.rank() == 4 && x.dim(1) == config_.resolution && x.dim(2) == config_.resolution && x.dim(3) == 3,
            "discriminator: expected [N, R, R, 3], got " + nn::shape_string(x.shape()));
    nn::Tensor<T> y = x;
    for (const auto& l : layers_) y = detail::apply_layer(tape, store_, l, y, training);
    y = nn::reshape(tape, y, {x.dim(0), flat_});
    y = detail::apply_layer(tape, store_, head_, y, training);
    return nn::sigmoid(tape, y);
  }

 private:
  DiscriminatorConfig config_;
  ParamStore<T> store_;
  std::vector<detail::Layer<T>> layers_;
  detail::Layer<T> head_;
  int flat_ = 0;
};

// ---------------------------------------------------------------------------
// Clean plate and compositing.

// Bilinear field whose four extreme pixels equal the corners (top-left,
// top-right, bottom-left, bottom-right).
inline ImageD hallucinate_background(const std::array<std::array<double, 3>, 4>& corners, int resolution = 32) {
  require(resolution >= 2, "hallucinate_background: resolution must be at least 2");
  ImageD out(resolution, resolution, 3);
  for (int y = 0; y < resolution; ++y) {
    const double v = static_cast<double>(y) / (resolution - 1);
    for (int x = 0; x < resolution; ++x) {
      const double u = static_cast<double>(x) / (resolution - 1);
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - u) * corners[0][c] + u * corners[1][c];
        const double bottom = (1.0 - u) * corners[2][c] + u * corners[3][c];
        out(x, y, c) = (1.0 - v) * top + v * bottom;
      }
    }
  }
  return out;
}

template <class T>
std::array<std::array<double, 3>, 4> sphere_corners(const Image<T>& sphere) {
  const int w = sphere.width() - 1, h = sphere.height() - 1;
  std::array<std::array<double, 3>, 4> out{};
  const int xs[4] = {0, w, 0, w}, ys[4] = {0, 0, h, h};
  for (int k = 0; k < 4; ++k)
    for (int c = 0; c < 3; ++c) out[k][c] = sphere(xs[k], ys[k], c);
  return out;
}

// Blend weight per sphere pixel: subpixel coverage where the pixel center lies
// on the disc, 0 elsewhere (the rendered sphere is black there).
inline std::vector<double> composite_alpha(const DiscMask& disc) {
  std::vector<double> a(disc.alpha.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = disc.mask[i] ? disc.alpha[i] : 0.0;
  return a;
}

inline ImageD composite_on_plate(const ImageD& sphere, const ImageD& plate, std::span<const double> alpha) {
  require(sphere.same_shape(plate) && alpha.size() == static_cast<std::size_t>(sphere.width()) * sphere.height(),
          "composite_on_plate: sphere, plate and alpha sizes differ");
  ImageD out(sphere.width(), sphere.height(), sphere.channels());
  const int c = sphere.channels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = alpha[i / c];
    out.values()[i] = a * sphere.values()[i] + (1.0 - a) * plate.values()[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses on the tape.

inline constexpr double kDiscriminatorClamp = 1e-7;

template <class T>
struct AdvLoss {
  nn::Tensor<T> value;   // mean log D(real) + mean log(1 - D(fake))
  nn::Tensor<T> g_term;  // mean log(1 - D(fake))
};

template <class T>
AdvLoss<T> adv_loss(nn::Tape<T>& tape, const nn::Tensor<T>& d_real, const nn::Tensor<T>& d_fake) {
  const T lo = static_cast<T>(kDiscriminatorClamp), hi = T(1) - static_cast<T>(kDiscriminatorClamp);
  auto real_term = nn::mean(tape, nn::log_clamped(tape, d_real, lo, hi));
  auto fake_term = nn::mean(tape, nn::log1m_clamped(tape, d_fake, lo, hi));
  return {nn::add(tape, real_term, fake_term), fake_term};
}

// Everything the reconstruction loss needs that does not change per batch.
template <class T>
struct RenderContext {
  std::array<RelightOperator<T>, 3> ops;
  std::vector<std::uint8_t> sphere_mask;
  std::vector<T> alpha;
  int sphere_resolution = 0;
  int probe_resolution = 0;

  static RenderContext build(const FieldSet& fields) {
    RenderContext ctx;
    for (Brdf b : kAllBrdfs) ctx.ops[static_cast<int>(b)] = RelightOperator<T>::build(fields[b]);
    ctx.sphere_resolution = fields.fields[0].sphere_resolution();
    ctx.probe_resolution = fields.fields[0].layout().resolution;
    const DiscMask disc = DiscMask::build(ctx.sphere_resolution);
    ctx.sphere_mask = disc.mask;
    for (double a : composite_alpha(disc)) ctx.alpha.push_back(static_cast<T>(a));
    return ctx;
  }
  std::size_t sphere_size() const { return static_cast<std::size_t>(sphere_resolution) * sphere_resolution * 3; }
};

template <class T>
struct RecLoss {
  nn::Tensor<T> total;
  std::array<nn::Tensor<T>, 3> per_brdf;
  std::array<nn::Tensor<T>, 3> ldr;  // encode(soft_clip(render)) per Brdf
};

// targets[b] holds soft-clipped truth for the whole batch, [N, S, S, 3].
template <class T>
RecLoss<T> rec_loss_batch(nn::Tape<T>& tape, const RenderContext<T>& ctx, const nn::Tensor<T>& q,
                          const std::array<std::vector<T>, 3>& targets, const BrdfWeights& weights) {
  RecLoss<T> out;
  std::vector<nn::Tensor<T>> terms;
  std::vector<T> w;
  for (int b = 0; b < 3; ++b) {
    auto lin = nn::relight_batch(tape, q, ctx.ops[b]);
    auto clipped = nn::soft_clip(tape, lin, static_cast<T>(kSoftClipSharpness));
    out.ldr[b] = nn::gamma_encode(tape, clipped, static_cast<T>(kGamma));
    out.per_brdf[b] = nn::masked_l1(tape, out.ldr[b], std::span<const T>(targets[b]),
                                    std::span<const std::uint8_t>(ctx.sphere_mask));
    terms.push_back(out.per_brdf[b]);
    w.push_back(static_cast<T>(weights.values[b]));
  }
  out.total = nn::weighted_sum(tape, terms, w);
  return out;
}

// ---------------------------------------------------------------------------
// Training data held in memory.

struct CompactExample {
  std::vector<std::uint8_t> background;         // 192 x 135 x 3, quantized
  std::array<std::vector<float>, 3> target;     // soft-clipped truth per Brdf
  std::array<std::array<double, 3>, 4> corners; // of the raw mirror crop
};

struct TrainingSet {
  int sphere_resolution = 0;
  std::vector<CompactExample> examples;
  ImageD mean_log_probe;  // baseline predictor: mean of ln(s * env) over the set

  std::size_t size() const { return examples.size(); }

  static TrainingSet from_examples(const std::vector<TrainingExample>& xs, const ProbeLayout& layout) {
    TrainingSet set;
    require(!xs.empty(), "training set is empty");
    set.sphere_resolution = xs[0].spheres[0].resolution();
    set.mean_log_probe = ImageD(layout.resolution, layout.resolution, 3);
    for (const auto& ex : xs) {
      CompactExample c;
      require(ex.background.width() == kBackgroundWidth && ex.background.height() == kBackgroundHeight,
              "training example background must be 135x192");
      c.background.resize(ex.background.size());
      for (std::size_t i = 0; i < ex.background.size(); ++i)
        c.background[i] = static_cast<std::uint8_t>(
            std::clamp(std::lround((static_cast<double>(ex.background.values()[i]) + 0.5) * 255.0), 0L, 255L));
      for (int b = 0; b < 3; ++b) {
        const auto& s = ex.spheres[b];
        require(s.resolution() == set.sphere_resolution, "training set: sphere resolutions differ");
        c.target[b].resize(s.rgb.size());
        for (std::size_t i = 0; i < s.rgb.size(); ++i)
          c.target[b][i] = static_cast<float>(soft_clip<double>(s.rgb.values()[i]));
      }
      c.corners = sphere_corners(ex.spheres[static_cast<int>(Brdf::kMirror)].rgb);
      set.examples.push_back(std::move(c));
      const Probe q = oracle_log_probe(ex, layout);
      for (std::size_t i = 0; i < q.values.size(); ++i) set.mean_log_probe.values()[i] += q.values.values()[i];
    }
    for (double& v : set.mean_log_probe.values()) v /= static_cast<double>(xs.size());
    return set;
  }
};

// Network input for one quantized background, optionally mirrored.
inline void fill_background(std::span<float> dst, std::span<const std::uint8_t> src, bool flip) {
  const int w = kBackgroundWidth, h = kBackgroundHeight;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sx = flip ? w - 1 - x : x;
      for (int c = 0; c < 3; ++c)
        dst[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<float>(src[(static_cast<std::size_t>(y) * w + sx) * 3 + c]) / 255.0f - 0.5f;
    }
}

inline nn::Tensor<float> background_tensor(const ImageF& background) {
  require(background.width() == kBackgroundWidth && background.height() == kBackgroundHeight &&
              background.channels() == 3,
          "background must be 135x192 RGB");
  return nn::Tensor<float>::from({1, kBackgroundHeight, kBackgroundWidth, 3},
                                 std::vector<float>(background.values().begin(), background.values().end()));
}

struct Batch {
  nn::Tensor<float> input;
  std::array<std::vector<float>, 3> targets;
  std::vector<float> plate;
  std::vector<float> real;  // composited soft-clipped mirror truth
};

inline Batch assemble_batch(const TrainingSet& set, std::span<const std::size_t> indices, std::span<const std::uint8_t> flips,
                            const RenderContext<float>& ctx) {
  const int n = static_cast<int>(indices.size());
  const int s = set.sphere_resolution;
  const std::size_t bg = static_cast<std::size_t>(kBackgroundWidth) * kBackgroundHeight * 3;
  const std::size_t ss = ctx.sphere_size();
  Batch batch;
  batch.input = nn::Tensor<float>::zeros({n, kBackgroundHeight, kBackgroundWidth, 3});
  for (auto& t : batch.targets) t.resize(n * ss);
  batch.plate.resize(n * ss);
  batch.real.resize(n * ss);
  for (int k = 0; k < n; ++k) {
    const CompactExample& ex = set.examples[indices[k]];
    const bool flip = flips[k] != 0;
    fill_background(batch.input.value().subspan(k * bg, bg), ex.background, flip);
    for (int b = 0; b < 3; ++b)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          for (int c = 0; c < 3; ++c) {
            const int sx = flip ? s - 1 - x : x;
            batch.targets[b][k * ss + (static_cast<std::size_t>(y) * s + x) * 3 + c] =
                ex.target[b][(static_cast<std::size_t>(y) * s + sx) * 3 + c];
          }
    auto corners = ex.corners;
    if (flip) {
      std::swap(corners[0], corners[1]);
      std::swap(corners[2], corners[3]);
    }
    const ImageD plate = hallucinate_background(corners, s);
    const auto& mirror = batch.targets[static_cast<int>(Brdf::kMirror)];
    for (std::size_t i = 0; i < ss; ++i) {
      const float a = ctx.alpha[i / 3];
      batch.plate[k * ss + i] = static_cast<float>(plate.values()[i]);
      batch.real[k * ss + i] = a * mirror[k * ss + i] + (1.0f - a) * batch.plate[k * ss + i];
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Joint training.

struct StepLog {
  std::uint64_t step = 0;
  double rec_loss = 0.0;
  std::array<double, 3> per_brdf{};
  double adv = 0.0;     // adversarial objective on this batch
  double d_loss = 0.0;
  double g_loss = 0.0;
  double d_real = 0.0;  // mean D output on real composites
  double d_fake = 0.0;
};

class Trainer {
 public:
  Trainer(const ModelConfig& config, const FieldSet& fields)
      : config_(config),
        ctx_(RenderContext<float>::build(fields)),
        generator_(config.generator, derive_seed(config.train.seed, 101)),
        discriminator_(config.discriminator, derive_seed(config.train.seed, 202)),
        rng_(derive_seed(config.train.seed, 303)) {
    config.train.validate();
    require(config.generator.probe_resolution == ctx_.probe_resolution,
            "generator probe resolution does not match the reflectance fields");
    require(config.discriminator.resolution == ctx_.sphere_resolution,
            "discriminator resolution does not match the sphere resolution");
    nn::AdamConfig g{config.train.lr_g, 0.9, 0.999, 1e-8};
    nn::AdamConfig d{config.train.lr_g * config.train.lr_d_ratio, 0.9, 0.999, 1e-8};
    opt_g_ = nn::Adam<float>(generator_.store().parameter_tensors(), g);
    opt_d_ = nn::Adam<float>(discriminator_.store().parameter_tensors(), d);
  }

  const ModelConfig& config() const { return config_; }
  Generator<float>& generator() { return generator_; }
  Discriminator<float>& discriminator() { return discriminator_; }
  nn::Adam<float>& optimizer_g() { return opt_g_; }
  nn::Adam<float>& optimizer_d() { return opt_d_; }
  Rng& rng() { return rng_; }
  std::uint64_t step_count() const { return step_; }
  void set_step_count(std::uint64_t s) { step_ = s; }
  const RenderContext<float>& render_context() const { return ctx_; }
  ImageD& baseline() { return baseline_; }
  const ImageD& baseline() const { return baseline_; }

  // Draws the next batch: distinct examples, each flipped with probability 1/2
  // when augmentation is on.
  Batch next_batch(const TrainingSet& set) {
    require(set.size() > 0, "training set is empty");
    const std::size_t n = std::min<std::size_t>(config_.train.batch_size, set.size());
    std::vector<std::size_t> pool(set.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> idx(n);
    std::vector<std::uint8_t> flips(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t j = k + rng_.below(pool.size() - k);
      std::swap(pool[k], pool[j]);
      idx[k] = pool[k];
    }
    for (std::size_t k = 0; k < n; ++k) flips[k] = config_.train.flip_augment && rng_.bernoulli(0.5);
    return assemble_batch(set, idx, flips, ctx_);
  }

  // One discriminator update then one generator update.
  StepLog step(const Batch& batch) {
    const TrainConfig& tc = config_.train;
    StepLog log;
    nn::Tape<float> tape;
    auto q = generator_.forward(tape, batch.input, true);
    auto rec = rec_loss_batch(tape, ctx_, q, batch.targets, tc.weights);
    log.rec_loss = rec.total.item();
    for (int b = 0; b < 3; ++b) log.per_brdf[b] = rec.per_brdf[b].item();

    nn::Tensor<float> g_loss = rec.total;
    if (tc.gan_enabled) {
      const float lambda = static_cast<float>(tc.lambda_rec);
      const auto& shape = rec.ldr[0].shape();
      auto fake = nn::composite(tape, rec.ldr[static_cast<int>(Brdf::kMirror)], std::span<const float>(ctx_.alpha),
                                std::span<const float>(batch.plate));
      auto real = nn::Tensor<float>::from(shape, batch.real);

      // Discriminator: maximize the adversarial objective on detached fakes.
      opt_d_.zero_grad();
      {
        nn::Tape<float> dtape;
        auto d_real = discriminator_.forward(dtape, real, true);
        auto d_fake = discriminator_.forward(dtape, fake.detach(), true);
        auto adv = adv_loss(dtape, d_real, d_fake);
        auto d_loss = nn::scale(dtape, adv.value, -(1.0f - lambda));
        log.adv = adv.value.item();
        log.d_loss = d_loss.item();
        log.d_real = mean_value(d_real);
        log.d_fake = mean_value(d_fake);
        dtape.backward(d_loss);
      }
      opt_d_.step();

      // Generator adversarial term through the updated discriminator.
      auto d_fake_g = discriminator_.forward(tape, fake, true);
      nn::Tensor<float> term;
      if (tc.non_saturating) {
        const float lo = static_cast<float>(kDiscriminatorClamp);
        term = nn::scale(tape, nn::mean(tape, nn::log_clamped(tape, d_fake_g, lo, 1.0f - lo)), -1.0f);
      } else {
        term = adv_loss(tape, d_fake_g, d_fake_g).g_term;
      }
      g_loss = nn::weighted_sum(tape, {rec.total, term}, {lambda, 1.0f - lambda});
    }
    log.g_loss = g_loss.item();
    opt_g_.zero_grad();
    tape.backward(g_loss);
    opt_g_.step();
    opt_d_.zero_grad();
    log.step = ++step_;
    return log;
  }

  StepLog step(const TrainingSet& set) { return step(next_batch(set)); }

  // Inference-mode log probes for a batch of backgrounds [N, 192, 135, 3].
  nn::Tensor<float> predict(const nn::Tensor<float>& input) {
    nn::Tape<float> tape(false);
    return generator_.forward(tape, input, false);
  }

  Probe infer(const ImageF& background) {
    const auto q = predict(background_tensor(background));
    const int r = ctx_.probe_resolution;
    Probe out = Probe::zeros(r, ProbeSpace::kLog);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values.values()[i] = q.value()[i];
    return out;
  }

  // Mean inference-mode L_rec over the whole set without augmentation.
  double evaluate_rec_loss(const TrainingSet& set, int chunk = 16) {
    double total = 0.0;
    for (std::size_t start = 0; start < set.size(); start += chunk) {
      const std::size_t n = std::min<std::size_t>(chunk, set.size() - start);
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), start);
      const std::vector<std::uint8_t> flips(n, 0);
      const Batch batch = assemble_batch(set, idx, flips, ctx_);
      nn::Tape<float> tape(false);
      auto q = generator_.forward(tape, batch.input, false);
      auto rec = rec_loss_batch(tape, ctx_, q, batch.targets, config_.train.weights);
      total += rec.total.item() * static_cast<double>(n);
    }
    return total / static_cast<double>(set.size());
  }

 private:
  static double mean_value(const nn::Tensor<float>& t) {
    double s = 0.0;
    for (float v : t.value()) s += v;
    return s / static_cast<double>(t.numel());
  }

  ModelConfig config_;
  RenderContext<float> ctx_;
  Generator<float> generator_;
  Discriminator<float> discriminator_;
  nn::Adam<float> opt_g_;
  nn::Adam<float> opt_d_;
  Rng rng_;
  std::uint64_t step_ = 0;
  ImageD baseline_;
};

}  // namespace ibrl
