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

// Reflectance fields R(direction, x, y) for the three reference spheres.
//
// A field stores, for every valid probe direction i, the linear RGB image of
// the sphere lit by unit radiance arriving through probe pixel i. Relighting
// is then a per-pixel dot product of the field with the environment.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "ibrl/error.hpp"
#include "ibrl/image.hpp"
#include "ibrl/io/binary.hpp"
#include "ibrl/probe_geometry.hpp"

namespace ibrl {

enum class Brdf : std::uint32_t { kMirror = 0, kDiffuse = 1, kMatteSilver = 2 };

inline constexpr std::array<Brdf, 3> kAllBrdfs{Brdf::kMirror, Brdf::kDiffuse, Brdf::kMatteSilver};

inline const char* brdf_name(Brdf b) {
  switch (b) {
    case Brdf::kMirror: return "mirror";
    case Brdf::kDiffuse: return "diffuse";
    case Brdf::kMatteSilver: return "matte_silver";
  }
  return "unknown";
}

// Measured reflectivities of the reference spheres.
inline constexpr double kMirrorReflectivity = 0.827;
inline constexpr double kMatteSilverReflectivity = 0.644;
inline constexpr double kDiffuseAlbedo = 0.345;
inline constexpr int kDefaultPhongExponent = 64;

class ReflectanceField {
 public:
  ReflectanceField() = default;
  ReflectanceField(Brdf brdf, double reflectivity, ProbeLayout layout, int sphere_resolution)
      : brdf_(brdf),
        reflectivity_(reflectivity),
        layout_(std::move(layout)),
        sphere_resolution_(sphere_resolution),
        basis_(static_cast<std::size_t>(layout_.valid_count()) * sphere_resolution *
                   sphere_resolution * 3,
               0.0) {}

  Brdf brdf() const { return brdf_; }
  double reflectivity() const { return reflectivity_; }
  const ProbeLayout& layout() const { return layout_; }
  int sphere_resolution() const { return sphere_resolution_; }
  int sphere_pixels() const { return sphere_resolution_ * sphere_resolution_; }
  int direction_count() const { return layout_.valid_count(); }

  // Basis value for valid-direction index `dir`, sphere pixel `pixel`, channel c.
  double& at(int dir, int pixel, int c) { return basis_[offset(dir, pixel, c)]; }
  double at(int dir, int pixel, int c) const { return basis_[offset(dir, pixel, c)]; }

  // Sets all three channels; values are held at float32 precision so that the
  // on-disk form is lossless.
  void set_gray(int dir, int pixel, double value) {
    const double v = static_cast<float>(value);
    for (int c = 0; c < 3; ++c) at(dir, pixel, c) = v;
  }

  std::span<const double> values() const { return basis_; }
  std::span<double> values() { return basis_; }

 private:
  std::size_t offset(int dir, int pixel, int c) const {
    return (static_cast<std::size_t>(dir) * sphere_pixels() + pixel) * 3 + c;
  }

  Brdf brdf_ = Brdf::kMirror;
  double reflectivity_ = 0.0;
  ProbeLayout layout_;
  int sphere_resolution_ = 0;
  std::vector<double> basis_;
};

namespace detail {

inline double ipow(double base, int exponent) {
  double result = 1.0;
  while (exponent > 0) {
    if (exponent & 1) result *= base;
    base *= base;
    exponent >>= 1;
  }
  return result;
}

// Directions of a supersample x supersample sub-grid over probe pixel `pixel`,
// restricted to sub-points inside the disc.
inline std::vector<Vec3> sub_directions(int pixel, int resolution, int supersample) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(supersample) * supersample);
  const int u = pixel % resolution;
  const int v = pixel / resolution;
  for (int sy = 0; sy < supersample; ++sy) {
    for (int sx = 0; sx < supersample; ++sx) {
      const DiscCoord d = pixel_center_to_disc(u - 0.5 + (sx + 0.5) / supersample,
                                               v - 0.5 + (sy + 0.5) / supersample, resolution);
      if (auto dir = disc_to_direction(d)) out.push_back(*dir);
    }
  }
  return out;
}

inline void check_fraction(double value, const char* what) {
  require(value > 0.0 && value <= 1.0, std::string(what) + " must lie in (0, 1]");
}

}  // namespace detail

inline ReflectanceField mirror_basis(const ProbeLayout& layout,
                                     double reflectivity = kMirrorReflectivity) {
  detail::check_fraction(reflectivity, "mirror_basis: reflectivity");
  require(layout.resolution >= 4, "mirror_basis: invalid layout");
  ReflectanceField field(Brdf::kMirror, reflectivity, layout, layout.resolution);
  for (int i = 0; i < layout.valid_count(); ++i)
    field.set_gray(i, layout.valid_pixels[i], reflectivity);
  return field;
}

// R = (albedo / pi) max(0, n . w_i) dw_i.
inline ReflectanceField lambertian_basis(const ProbeLayout& layout, int sphere_resolution,
                                         double albedo = kDiffuseAlbedo) {
  detail::check_fraction(albedo, "lambertian_basis: albedo");
  require(sphere_resolution >= 8, "lambertian_basis: sphere_resolution must be >= 8");
  ReflectanceField field(Brdf::kDiffuse, albedo, layout, sphere_resolution);
  const int s = sphere_resolution;
  for (int p = 0; p < s * s; ++p) {
    const auto n = disc_normal(pixel_center_to_disc(p % s, p / s, s));
    if (!n) continue;
    for (int i = 0; i < layout.valid_count(); ++i) {
      const int q = layout.valid_pixels[i];
      const double cosine = dot(*n, layout.directions[q]);
      if (cosine > 0.0)
        field.set_gray(i, p, albedo / std::numbers::pi * cosine * layout.solid_angles[q]);
    }
  }
  return field;
}

// R = reflectivity ((e + 2) / 2pi) max(0, r . w_i)^e dw_i with r the mirror
// direction of the view ray. The lobe is averaged over a supersample^2 grid of
// sub-directions inside each probe pixel (supersample = 1 evaluates it at the
// pixel center only). Directions below the surface horizon contribute 0.
inline ReflectanceField phong_basis(const ProbeLayout& layout, int sphere_resolution,
                                    double reflectivity = kMatteSilverReflectivity,
                                    int exponent = kDefaultPhongExponent, int supersample = 4) {
  detail::check_fraction(reflectivity, "phong_basis: reflectivity");
  require(sphere_resolution >= 8, "phong_basis: sphere_resolution must be >= 8");
  require(exponent >= 1, "phong_basis: exponent must be >= 1");
  require(supersample >= 1, "phong_basis: supersample must be >= 1");
  ReflectanceField field(Brdf::kMatteSilver, reflectivity, layout, sphere_resolution);
  const double norm = reflectivity * (exponent + 2) / (2.0 * std::numbers::pi);

  std::vector<std::vector<Vec3>> subs(layout.valid_count());
  for (int i = 0; i < layout.valid_count(); ++i) {
    subs[i] = supersample == 1
                  ? std::vector<Vec3>{layout.directions[layout.valid_pixels[i]]}
                  : detail::sub_directions(layout.valid_pixels[i], layout.resolution, supersample);
  }

  const int s = sphere_resolution;
  for (int p = 0; p < s * s; ++p) {
    const auto n = disc_normal(pixel_center_to_disc(p % s, p / s, s));
    if (!n) continue;
    const Vec3 r = reflect(kViewDirection, *n);
    for (int i = 0; i < layout.valid_count(); ++i) {
      const int q = layout.valid_pixels[i];
      if (dot(*n, layout.directions[q]) <= 0.0) continue;
      double lobe = 0.0;
      for (const Vec3& w : subs[i]) {
        const double c = dot(r, w);
        if (c > 0.0) lobe += detail::ipow(c, exponent);
      }
      lobe /= static_cast<double>(subs[i].size());
      if (lobe > 0.0) field.set_gray(i, p, norm * lobe * layout.solid_angles[q]);
    }
  }
  return field;
}

// One observed basis image: the sphere lit from `direction`.
struct FieldSample {
  Vec3 direction;
  ImageD image;  // sphere_resolution^2 x 3, linear
};

struct ResampleWeight {
  int direction = 0;  // valid-direction index
  double weight = 0.0;
};

// Distribution of one sample's energy over the probe directions: a normalized
// Phong lobe around the sample direction, averaged over supersample^2
// sub-directions of each target pixel. Weights sum to 1.
inline std::vector<ResampleWeight> resample_weights(const Vec3& direction,
                                                    const ProbeLayout& layout,
                                                    int lobe_exponent = kDefaultPhongExponent,
                                                    int supersample = 4) {
  require(lobe_exponent >= 1 && supersample >= 1, "resample_weights: bad lobe parameters");
  const Vec3 d = normalize(direction);
  std::vector<ResampleWeight> raw;
  double peak = 0.0;
  for (int i = 0; i < layout.valid_count(); ++i) {
    const auto subs = detail::sub_directions(layout.valid_pixels[i], layout.resolution, supersample);
    double k = 0.0;
    for (const Vec3& w : subs) {
      const double c = dot(d, w);
      if (c > 0.0) k += detail::ipow(c, lobe_exponent);
    }
    if (subs.empty() || k <= 0.0) continue;
    k /= static_cast<double>(subs.size());
    peak = std::max(peak, k);
    raw.push_back({i, k});
  }
  // Entries more than 12 orders of magnitude below the peak are dropped.
  std::vector<ResampleWeight> out;
  double total = 0.0;
  for (const auto& w : raw) {
    if (w.weight < peak * 1e-12) continue;
    out.push_back(w);
    total += w.weight;
  }
  for (auto& w : out) w.weight /= total;
  return out;
}

// Converts basis images observed at arbitrary light directions into a field on
// the probe layout by spreading each sample's energy with resample_weights.
inline ReflectanceField resample_field(const std::vector<FieldSample>& samples,
                                       const ProbeLayout& layout, Brdf brdf, double reflectivity,
                                       int lobe_exponent = kDefaultPhongExponent,
                                       int supersample = 4) {
  require(!samples.empty(), "resample_field: sample list is empty");
  const int s = samples.front().image.width();
  for (const auto& smp : samples) {
    require(smp.image.width() == s && smp.image.height() == s && smp.image.channels() == 3,
            "resample_field: sample images must share one square RGB resolution");
  }
  ReflectanceField field(brdf, reflectivity, layout, s);
  std::vector<double> acc(field.values().size(), 0.0);
  const std::size_t plane = static_cast<std::size_t>(s) * s * 3;
  for (const auto& smp : samples) {
    const auto& img = smp.image.storage();
    for (const auto& w : resample_weights(smp.direction, layout, lobe_exponent, supersample)) {
      double* dst = acc.data() + static_cast<std::size_t>(w.direction) * plane;
      for (std::size_t k = 0; k < plane; ++k) dst[k] += w.weight * img[k];
    }
  }
  auto out = field.values();
  for (std::size_t k = 0; k < acc.size(); ++k) out[k] = static_cast<float>(acc[k]);
  return field;
}

// ---------------------------------------------------------------------------
// RFLD file: "RFLD", u32 version, u32 brdf id, f32 reflectivity, u32 probe
// resolution, u32 sphere resolution, u32 direction count; then for each valid
// direction (row-major probe order) the R, G and B planes of the sphere image,
// each row-major float32. All little-endian.

inline constexpr std::uint32_t kFieldFileVersion = 1;

inline void write_field(std::ostream& os, const ReflectanceField& field) {
  io::BinaryWriter w(os);
  w.magic("RFLD");
  w.u32(kFieldFileVersion);
  w.u32(static_cast<std::uint32_t>(field.brdf()));
  w.f32(static_cast<float>(field.reflectivity()));
  w.u32(static_cast<std::uint32_t>(field.layout().resolution));
  w.u32(static_cast<std::uint32_t>(field.sphere_resolution()));
  w.u32(static_cast<std::uint32_t>(field.direction_count()));
  std::vector<float> plane(field.sphere_pixels());
  for (int i = 0; i < field.direction_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      for (int p = 0; p < field.sphere_pixels(); ++p) plane[p] = static_cast<float>(field.at(i, p, c));
      w.f32_array(plane);
    }
  }
}

inline ReflectanceField read_field(std::istream& is, const std::string& context = "RFLD") {
  io::BinaryReader r(is, context);
  r.expect_magic("RFLD");
  const std::uint32_t version = r.u32();
  if (version != kFieldFileVersion)
    throw VersionError(context + ": unsupported RFLD version " + std::to_string(version));
  const std::uint32_t brdf = r.u32();
  if (brdf > 2) throw ParseError(context + ": unknown brdf id");
  const float reflectivity = r.f32();
  const std::uint32_t probe_res = r.u32();
  const std::uint32_t sphere_res = r.u32();
  const std::uint32_t count = r.u32();
  if (probe_res < 4 || probe_res % 2 || probe_res > 4096 || sphere_res < 1 || sphere_res > 4096)
    throw ParseError(context + ": resolution out of range");
  ProbeLayout layout = build_layout(static_cast<int>(probe_res));
  if (static_cast<int>(count) != layout.valid_count())
    throw ParseError(context + ": direction count does not match probe resolution");
  ReflectanceField field(static_cast<Brdf>(brdf), reflectivity, std::move(layout),
                         static_cast<int>(sphere_res));
  std::vector<float> plane(field.sphere_pixels());
  for (int i = 0; i < field.direction_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      r.f32_array(plane);
      for (int p = 0; p < field.sphere_pixels(); ++p) field.at(i, p, c) = plane[p];
    }
  }
  return field;
}

inline void save_field(const std::filesystem::path& path, const ReflectanceField& field) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_field(os, field);
}

inline ReflectanceField load_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_field(is, path.string());
}

// The three reference spheres with default parameters.
struct FieldSet {
  std::array<ReflectanceField, 3> fields;  // indexed by Brdf

  const ReflectanceField& operator[](Brdf b) const { return fields[static_cast<int>(b)]; }
};

inline FieldSet default_fields(const ProbeLayout& layout, int sphere_resolution = 32) {
  return FieldSet{{mirror_basis(layout), lambertian_basis(layout, sphere_resolution),
                   phong_basis(layout, sphere_resolution)}};
}

}  // namespace ibrl
