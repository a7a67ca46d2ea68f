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

// Procedural training data: random HDR environments, LDR backgrounds lit by
// them, and ground-truth sphere crops rendered through the same relighting
// path the loss uses.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "ibrl/error.hpp"
#include "ibrl/image.hpp"
#include "ibrl/probe_geometry.hpp"
#include "ibrl/reflectance_basis.hpp"
#include "ibrl/relight.hpp"
#include "ibrl/rng.hpp"
#include "ibrl/vec3.hpp"

namespace ibrl {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Range&) const = default;
};

struct EnvironmentSpec {
  Range ambient{0.05, 0.4};           // base sky radiance
  double sky_gradient = 1.0;          // 0 = uniform white ambient
  Range light_count{1, 4};
  Range light_elevation_deg{-10.0, 85.0};
  Range light_radius_deg{1.0, 12.0};  // Gaussian angular radius, log-uniform
  Range light_ratio{0.5, 100.0};      // light irradiance / ambient irradiance, log-uniform
  Range color_temperature_k{2800.0, 9000.0};
  bool operator==(const EnvironmentSpec&) const = default;
};

struct SceneSpec {
  Range camera_pitch_deg{5.0, 35.0};  // downward tilt
  double vertical_fov_deg = 64.0;
  double camera_height = 1.5;
  Range primitive_count{1, 5};
  Range primitive_radius{0.25, 1.0};
  Range primitive_distance{2.5, 9.0};
  Range albedo{0.1, 0.7};
  Range ground_tint{0.75, 1.0};     // per-channel albedo factor
  Range primitive_tint{0.5, 1.0};
  double phong_fraction = 0.35;
  Range phong_reflectivity{0.3, 0.8};
  bool operator==(const SceneSpec&) const = default;
};

// Approximate sRGB-primaries color of a blackbody, normalized to unit luminance.
inline std::array<double, 3> blackbody_rgb(double kelvin) {
  const double t = std::clamp(kelvin, 1000.0, 40000.0) / 100.0;
  double r, g, b;
  if (t <= 66.0) {
    r = 255.0;
    g = 99.4708025861 * std::log(t) - 161.1195681661;
  } else {
    r = 329.698727446 * std::pow(t - 60.0, -0.1332047592);
    g = 288.1221695283 * std::pow(t - 60.0, -0.0755148492);
  }
  if (t >= 66.0) b = 255.0;
  else if (t <= 19.0) b = 0.0;
  else b = 138.5177312231 * std::log(t - 10.0) - 305.0447927307;
  std::array<double, 3> c{std::clamp(r, 1.0, 255.0) / 255.0, std::clamp(g, 1.0, 255.0) / 255.0,
                          std::clamp(b, 1.0, 255.0) / 255.0};
  const double lum = 0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2];
  for (double& v : c) v /= lum;
  return c;
}

inline double luminance(double r, double g, double b) { return 0.2126 * r + 0.7152 * g + 0.0722 * b; }

struct AreaLight {
  Vec3 direction;
  double radius = 0.0;           // radians
  std::array<double, 3> radiance{};  // peak
};

// Analytic environment from which probes are rasterized.
struct Environment {
  double ambient = 0.0;
  double sky_gradient = 0.0;
  std::array<double, 3> zenith{1, 1, 1};
  std::array<double, 3> horizon{1, 1, 1};
  std::array<double, 3> ground{1, 1, 1};
  std::vector<AreaLight> lights;

  std::array<double, 3> radiance(const Vec3& d) const {
    std::array<double, 3> sky;
    const double e = d.y;
    for (int c = 0; c < 3; ++c) {
      double tint;
      if (e >= 0.0) tint = horizon[c] + (zenith[c] - horizon[c]) * std::sqrt(e);
      else tint = horizon[c] + (ground[c] - horizon[c]) * std::min(1.0, -4.0 * e);
      sky[c] = ambient * ((1.0 - sky_gradient) + sky_gradient * tint);
    }
    for (const auto& l : lights) {
      const double a = angle_between(d, l.direction);
      if (a > 5.0 * l.radius) continue;
      const double w = std::exp(-0.5 * a * a / (l.radius * l.radius));
      for (int c = 0; c < 3; ++c) sky[c] += w * l.radiance[c];
    }
    return sky;
  }
};

inline Environment sample_environment_model(std::uint64_t seed, const EnvironmentSpec& spec) {
  Rng rng(seed);
  Environment env;
  env.ambient = rng.uniform(spec.ambient.lo, spec.ambient.hi);
  env.sky_gradient = spec.sky_gradient;
  const auto sky_color = blackbody_rgb(rng.uniform(6000.0, 12000.0));
  const double zenith_gain = rng.uniform(0.6, 1.6);
  for (int c = 0; c < 3; ++c) {
    env.zenith[c] = zenith_gain * sky_color[c];
    env.horizon[c] = rng.uniform(0.8, 1.2);
    env.ground[c] = 0.0;
  }
  const double ground_level = rng.uniform(0.15, 0.6);
  const auto ground_tint = blackbody_rgb(rng.uniform(3000.0, 6000.0));
  for (int c = 0; c < 3; ++c) env.ground[c] = ground_level * ground_tint[c];

  const int count = rng.uniform_int(static_cast<int>(spec.light_count.lo), static_cast<int>(spec.light_count.hi));
  for (int k = 0; k < count; ++k) {
    AreaLight l;
    const double elev = rng.uniform(spec.light_elevation_deg.lo, spec.light_elevation_deg.hi) *
                        std::numbers::pi / 180.0;
    const double azim = rng.uniform(0.0, 2.0 * std::numbers::pi);
    l.direction = normalize(Vec3{std::cos(elev) * std::sin(azim), std::sin(elev), std::cos(elev) * std::cos(azim)});
    l.radius = std::exp(rng.uniform(std::log(spec.light_radius_deg.lo), std::log(spec.light_radius_deg.hi))) *
               std::numbers::pi / 180.0;
    const double ratio = std::exp(rng.uniform(std::log(spec.light_ratio.lo), std::log(spec.light_ratio.hi)));
    // Irradiance of the ambient term is ~ pi * ambient; a Gaussian lobe of
    // peak P and radius s delivers ~ 2 pi s^2 P at normal incidence.
    const double peak = ratio * std::numbers::pi * env.ambient / (2.0 * std::numbers::pi * l.radius * l.radius);
    const auto color = blackbody_rgb(rng.uniform(spec.color_temperature_k.lo, spec.color_temperature_k.hi));
    for (int c = 0; c < 3; ++c) l.radiance[c] = peak * color[c];
    env.lights.push_back(l);
  }
  return env;
}

// Box-filters the analytic environment over each probe pixel (4x4
// sub-directions). Values are kept at float precision so PFM storage is exact.
inline Probe rasterize_environment(const Environment& env, const ProbeLayout& layout) {
  Probe probe = Probe::zeros(layout.resolution, ProbeSpace::kLinear);
  for (int p : layout.valid_pixels) {
    const auto subs = detail::sub_directions(p, layout.resolution, 4);
    std::array<double, 3> acc{};
    for (const Vec3& d : subs) {
      const auto l = env.radiance(d);
      for (int c = 0; c < 3; ++c) acc[c] += l[c];
    }
    for (int c = 0; c < 3; ++c)
      probe.values(p % layout.resolution, p / layout.resolution, c) =
          static_cast<float>(acc[c] / static_cast<double>(subs.size()));
  }
  return probe;
}

inline Probe sample_environment(std::uint64_t seed, const EnvironmentSpec& spec, const ProbeLayout& layout) {
  return rasterize_environment(sample_environment_model(seed, spec), layout);
}

// ---------------------------------------------------------------------------
// Backgrounds.

struct ScenePrimitive {
  Vec3 center;
  double radius = 0.0;
  std::array<double, 3> albedo{};  // Lambertian albedo or Phong reflectivity
  bool phong = false;
};

struct BackgroundScene {
  double pitch = 0.0;  // radians, positive looks down
  double vertical_fov = 0.0;
  double camera_height = 0.0;
  std::array<double, 3> ground_albedo{};
  std::vector<ScenePrimitive> primitives;
};

inline constexpr int kScenePhongExponent = 32;

inline BackgroundScene sample_scene(std::uint64_t seed, const SceneSpec& spec) {
  Rng rng(seed);
  BackgroundScene scene;
  scene.pitch = rng.uniform(spec.camera_pitch_deg.lo, spec.camera_pitch_deg.hi) * std::numbers::pi / 180.0;
  scene.vertical_fov = spec.vertical_fov_deg * std::numbers::pi / 180.0;
  scene.camera_height = spec.camera_height;
  const double g = rng.uniform(spec.albedo.lo, spec.albedo.hi);
  for (int c = 0; c < 3; ++c) scene.ground_albedo[c] = g * rng.uniform(spec.ground_tint.lo, spec.ground_tint.hi);
  const int count = rng.uniform_int(static_cast<int>(spec.primitive_count.lo), static_cast<int>(spec.primitive_count.hi));
  for (int k = 0; k < count; ++k) {
    ScenePrimitive prim;
    prim.radius = rng.uniform(spec.primitive_radius.lo, spec.primitive_radius.hi);
    const double dist = rng.uniform(spec.primitive_distance.lo, spec.primitive_distance.hi);
    const double lateral = rng.uniform(-0.45, 0.45) * dist;
    prim.center = Vec3{lateral, prim.radius, -dist};
    prim.phong = rng.bernoulli(spec.phong_fraction);
    const Range& range = prim.phong ? spec.phong_reflectivity : spec.albedo;
    const double base = rng.uniform(range.lo, range.hi);
    for (int c = 0; c < 3; ++c) prim.albedo[c] = base * rng.uniform(spec.primitive_tint.lo, spec.primitive_tint.hi);
    scene.primitives.push_back(prim);
  }
  return scene;
}

// Probe-space lookup tables for shading: cosine-weighted irradiance and a
// normalized Phong-filtered radiance.
struct ShadingMaps {
  ImageD irradiance;
  ImageD phong;
};

inline ShadingMaps build_shading_maps(const Probe& env, const ProbeLayout& layout) {
  const int r = layout.resolution;
  ShadingMaps maps{ImageD(r, r, 3), ImageD(r, r, 3)};
  const double norm = (kScenePhongExponent + 2) / (2.0 * std::numbers::pi);
  for (int p : layout.valid_pixels) {
    const Vec3& n = layout.directions[p];
    std::array<double, 3> e{}, s{};
    for (int q : layout.valid_pixels) {
      const double c = dot(n, layout.directions[q]);
      if (c <= 0.0) continue;
      const double lobe = norm * detail::ipow(c, kScenePhongExponent) * layout.solid_angles[q];
      for (int ch = 0; ch < 3; ++ch) {
        const double l = env.values(q % r, q / r, ch);
        e[ch] += c * layout.solid_angles[q] * l;
        s[ch] += lobe * l;
      }
    }
    for (int ch = 0; ch < 3; ++ch) {
      maps.irradiance(p % r, p / r, ch) = e[ch];
      maps.phong(p % r, p / r, ch) = s[ch];
    }
  }
  return maps;
}

// Linear-radiance render of the background scene. Camera at height h looking
// along -z, tilted down by the scene pitch; portrait 135x192. Surfaces are
// shaded from the environment without shadows or interreflection.
inline ImageD render_background(const Probe& env, const ProbeLayout& layout, const BackgroundScene& scene) {
  require(env.space == ProbeSpace::kLinear && env.resolution() == layout.resolution,
          "render_background: expected a linear probe on the layout");
  const ShadingMaps maps = build_shading_maps(env, layout);
  const int w = kBackgroundWidth, h = kBackgroundHeight;
  ImageD out(w, h, 3);
  const double tan_v = std::tan(0.5 * scene.vertical_fov);
  const double tan_h = tan_v * w / h;
  const Vec3 fwd{0.0, -std::sin(scene.pitch), -std::cos(scene.pitch)};
  const Vec3 up{0.0, std::cos(scene.pitch), -std::sin(scene.pitch)};
  const Vec3 right{1.0, 0.0, 0.0};
  const Vec3 eye{0.0, scene.camera_height, 0.0};

  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const double xn = 2.0 * (i + 0.5) / w - 1.0;
      const double yn = 1.0 - 2.0 * (j + 0.5) / h;
      const Vec3 d = normalize(fwd + right * (xn * tan_h) + up * (yn * tan_v));
      double t_best = 1e300;
      Vec3 normal;
      const std::array<double, 3>* albedo = nullptr;
      bool phong = false;
      if (d.y < 0.0) {
        t_best = -eye.y / d.y;
        normal = Vec3{0.0, 1.0, 0.0};
        albedo = &scene.ground_albedo;
      }
      for (const auto& prim : scene.primitives) {
        const Vec3 oc = eye - prim.center;
        const double b = dot(oc, d);
        const double c = dot(oc, oc) - prim.radius * prim.radius;
        const double disc = b * b - c;
        if (disc < 0.0) continue;
        const double t = -b - std::sqrt(disc);
        if (t > 1e-6 && t < t_best) {
          t_best = t;
          normal = normalize(eye + d * t - prim.center);
          albedo = &prim.albedo;
          phong = prim.phong;
        }
      }
      for (int c = 0; c < 3; ++c) {
        if (!albedo) {
          out(i, j, c) = sample_probe(env.values, layout, d, c);
        } else if (phong) {
          out(i, j, c) = (*albedo)[c] * sample_probe(maps.phong, layout, reflect(d, normal), c);
        } else {
          out(i, j, c) = (*albedo)[c] / std::numbers::pi * sample_probe(maps.irradiance, layout, normal, c);
        }
      }
    }
  }
  return out;
}

// Background of a scene drawn from `seed`, on the layout of the probe.
inline ImageD render_background(const Probe& env, std::uint64_t seed, const SceneSpec& spec = {}) {
  return render_background(env, build_layout(env.resolution()), sample_scene(seed, spec));
}

inline constexpr double kExposureTarget = 0.18;

// Exposure s that maps the median luminance of the linear background to 0.18.
inline double auto_expose(const ImageD& linear_background) {
  require(linear_background.channels() == 3, "auto_expose: expected an RGB image");
  std::vector<double> lum;
  lum.reserve(static_cast<std::size_t>(linear_background.width()) * linear_background.height());
  for (int y = 0; y < linear_background.height(); ++y)
    for (int x = 0; x < linear_background.width(); ++x)
      lum.push_back(luminance(linear_background(x, y, 0), linear_background(x, y, 1), linear_background(x, y, 2)));
  require(!lum.empty(), "auto_expose: empty image");
  const std::size_t mid = lum.size() / 2;
  std::nth_element(lum.begin(), lum.begin() + static_cast<std::ptrdiff_t>(mid), lum.end());
  double median = lum[mid];
  if (lum.size() % 2 == 0) {
    const double lower = *std::max_element(lum.begin(), lum.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (!(median > 1e-12)) throw DegenerateInputError("auto_expose: scene is black, cannot set exposure");
  return kExposureTarget / median;
}

// ---------------------------------------------------------------------------
// Examples.

struct TrainingExample {
  ImageF background;                // 135 x 192 x 3, 8-bit quantized, in [-0.5, 0.5]
  std::array<SphereImage, 3> spheres;  // indexed by Brdf
  Probe env;                        // linear, before exposure
  double exposure = 1.0;
  std::uint64_t seed = 0;
};

struct SynthSpec {
  EnvironmentSpec environment;
  SceneSpec scene;
  bool operator==(const SynthSpec&) const = default;
};

// Oracle lighting for an example: ln(exposure * env).
inline Probe oracle_log_probe(const TrainingExample& ex, const ProbeLayout& layout) {
  Probe exposed = ex.env;
  for (int p : layout.valid_pixels)
    for (int c = 0; c < 3; ++c) exposed.values(p % layout.resolution, p / layout.resolution, c) *= ex.exposure;
  return to_log(exposed, layout);
}

// LDR sphere crop: soft-clipped, gamma-encoded render on the disc; pixels off
// the disc show the exposed environment just past the sphere silhouette.
inline SphereImage render_truth_sphere(const ReflectanceField& field, const Probe& exposed_env,
                                       const ProbeLayout& layout) {
  const ImageD linear = relight_linear(field, exposed_env);
  const int s = field.sphere_resolution();
  SphereImage out = SphereImage::blank(s);
  for (int p = 0; p < s * s; ++p) {
    const int x = p % s, y = p / s;
    if (out.disc.mask[p]) {
      for (int c = 0; c < 3; ++c) out.rgb(x, y, c) = static_cast<float>(encode_ldr(soft_clip(linear(x, y, c))));
    } else {
      const DiscCoord dc = pixel_center_to_disc(x, y, s);
      const Vec3 d = normalize(Vec3{0.15 * dc.x, 0.15 * dc.y, -1.0});
      for (int c = 0; c < 3; ++c)
        out.rgb(x, y, c) = static_cast<float>(encode_ldr(soft_clip(sample_probe(exposed_env.values, layout, d, c))));
    }
  }
  return out;
}

// Background normalized the way the network sees camera frames: exposure, hard
// clip, gamma, 8-bit quantization, then shifted to [-0.5, 0.5].
inline ImageF ldr_background(const ImageD& linear, double exposure) {
  ImageF out(linear.width(), linear.height(), 3);
  for (std::size_t i = 0; i < linear.size(); ++i) {
    const double v = encode_ldr(std::min(linear.values()[i] * exposure, 1.0));
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    out.values()[i] = static_cast<float>(q) / 255.0f - 0.5f;
  }
  return out;
}

inline TrainingExample make_example_from(const Probe& env, const BackgroundScene& scene, const FieldSet& fields,
                                         std::uint64_t seed) {
  const ProbeLayout& layout = fields.fields[0].layout();
  TrainingExample ex;
  ex.seed = seed;
  ex.env = env;
  const ImageD linear_bg = render_background(env, layout, scene);
  ex.exposure = auto_expose(linear_bg);
  ex.background = ldr_background(linear_bg, ex.exposure);
  Probe exposed = env;
  for (double& v : exposed.values.values()) v *= ex.exposure;
  for (Brdf b : kAllBrdfs) ex.spheres[static_cast<int>(b)] = render_truth_sphere(fields[b], exposed, layout);
  return ex;
}

inline TrainingExample make_example(std::uint64_t seed, const SynthSpec& spec, const FieldSet& fields) {
  const ProbeLayout& layout = fields.fields[0].layout();
  const Probe env = sample_environment(derive_seed(seed, 1), spec.environment, layout);
  const BackgroundScene scene = sample_scene(derive_seed(seed, 2), spec.scene);
  return make_example_from(env, scene, fields, seed);
}

// True when no truth pixel on any disc comes near the soft-clip knee.
inline bool is_unclipped(const TrainingExample& ex, double threshold = 0.8) {
  for (const auto& s : ex.spheres)
    for (int p = 0; p < s.resolution() * s.resolution(); ++p) {
      if (!s.disc.mask[p]) continue;
      for (int c = 0; c < 3; ++c)
        if (s.rgb(p % s.resolution(), p / s.resolution(), c) > threshold) return false;
    }
  return true;
}

inline TrainingExample flip_example(const TrainingExample& ex) {
  TrainingExample out = ex;
  out.background = flip_horizontal(ex.background);
  for (auto& s : out.spheres) s.rgb = flip_horizontal(s.rgb);
  out.env.values = flip_horizontal(ex.env.values);
  return out;
}

}  // namespace ibrl
