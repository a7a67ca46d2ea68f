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

// Mirror-ball probe geometry.
//
// Conventions shared by every module: a probe or sphere image of resolution R
// has pixel centers at normalized disc coordinates
//   x = 2 (u + 0.5) / R - 1   (u = column, +x right)
//   y = 1 - 2 (v + 0.5) / R   (v = row,    +y up)
// The sphere is viewed orthographically along -z, so +z points from the sphere
// toward the camera. A disc point (x, y) has normal n = (x, y, sqrt(1 - x^2 -
// y^2)) and indexes the direction obtained by reflecting (0, 0, -1) about n.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ibrl/error.hpp"
#include "ibrl/image.hpp"
#include "ibrl/vec3.hpp"

namespace ibrl {

inline constexpr Vec3 kViewDirection{0.0, 0.0, -1.0};

struct DiscCoord {
  double x = 0.0;
  double y = 0.0;
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

inline DiscCoord pixel_center_to_disc(double u, double v, int resolution) {
  return {2.0 * (u + 0.5) / resolution - 1.0, 1.0 - 2.0 * (v + 0.5) / resolution};
}

inline PixelCoord disc_to_pixel_center(const DiscCoord& d, int resolution) {
  return {(d.x + 1.0) * resolution / 2.0 - 0.5, (1.0 - d.y) * resolution / 2.0 - 0.5};
}

// Outward sphere normal under disc point (x, y); nullopt outside the unit disc.
inline std::optional<Vec3> disc_normal(const DiscCoord& d) {
  const double r2 = d.x * d.x + d.y * d.y;
  if (r2 >= 1.0) return std::nullopt;
  return Vec3{d.x, d.y, std::sqrt(1.0 - r2)};
}

inline std::optional<Vec3> disc_to_direction(const DiscCoord& d) {
  const auto n = disc_normal(d);
  if (!n) return std::nullopt;
  return reflect(kViewDirection, *n);
}

// Inverse of disc_to_direction. (0, 0, -1) has no unique preimage; it maps to
// the boundary point (1, 0).
inline DiscCoord direction_to_disc(const Vec3& d) {
  const Vec3 h = d - kViewDirection;
  const double len = length(h);
  if (len < 1e-12) return {1.0, 0.0};
  return {h.x / len, h.y / len};
}

// Fraction of a pixel covered by the unit disc, from a 4x4 grid of sub-samples.
inline double disc_coverage(int u, int v, int resolution) {
  int inside = 0;
  for (int sy = 0; sy < 4; ++sy) {
    for (int sx = 0; sx < 4; ++sx) {
      const DiscCoord d = pixel_center_to_disc(u - 0.5 + (sx + 0.5) / 4.0,
                                               v - 0.5 + (sy + 0.5) / 4.0, resolution);
      if (d.x * d.x + d.y * d.y < 1.0) ++inside;
    }
  }
  return inside / 16.0;
}

inline bool disc_contains_center(int u, int v, int resolution) {
  const DiscCoord d = pixel_center_to_disc(u, v, resolution);
  return d.x * d.x + d.y * d.y < 1.0;
}

// Per-pixel disc mask and boundary alpha for a square sphere crop.
struct DiscMask {
  int resolution = 0;
  std::vector<std::uint8_t> mask;  // center inside disc
  std::vector<float> alpha;        // subpixel coverage

  static DiscMask build(int resolution) {
    require(resolution > 0, "DiscMask: resolution must be positive");
    DiscMask m;
    m.resolution = resolution;
    m.mask.resize(static_cast<std::size_t>(resolution) * resolution);
    m.alpha.resize(m.mask.size());
    for (int v = 0; v < resolution; ++v) {
      for (int u = 0; u < resolution; ++u) {
        const std::size_t i = static_cast<std::size_t>(v) * resolution + u;
        m.mask[i] = disc_contains_center(u, v, resolution) ? 1 : 0;
        m.alpha[i] = static_cast<float>(disc_coverage(u, v, resolution));
      }
    }
    return m;
  }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
  }
};

// Direction table for a mirror-ball probe.
struct ProbeLayout {
  int resolution = 0;
  std::vector<Vec3> directions;      // zero vector where invalid
  std::vector<double> solid_angles;  // steradians, 0 where invalid
  DiscMask disc;
  std::vector<int> valid_pixels;     // flat pixel indices, row-major order
  std::vector<int> valid_index;      // pixel -> position in valid_pixels or -1

  int pixel_count() const { return resolution * resolution; }
  int valid_count() const { return static_cast<int>(valid_pixels.size()); }
  bool valid(int pixel) const { return disc.mask[pixel] != 0; }
  bool operator==(const ProbeLayout& o) const { return resolution == o.resolution; }
};

// Solid angle of one probe pixel. The orthographic mirror-ball map has a
// constant area Jacobian dw/dA = 4 and a pixel spans (2/R)^2 of disc area.
inline double probe_pixel_solid_angle(int resolution) {
  const double side = 2.0 / resolution;
  return 4.0 * side * side;
}

inline ProbeLayout build_layout(int resolution) {
  require(resolution >= 4 && resolution % 2 == 0,
          "build_layout: resolution must be even and >= 4");
  ProbeLayout layout;
  layout.resolution = resolution;
  layout.disc = DiscMask::build(resolution);
  const int n = resolution * resolution;
  layout.directions.assign(n, Vec3{});
  layout.solid_angles.assign(n, 0.0);
  layout.valid_index.assign(n, -1);
  const double omega = probe_pixel_solid_angle(resolution);
  for (int v = 0; v < resolution; ++v) {
    for (int u = 0; u < resolution; ++u) {
      const int p = v * resolution + u;
      if (!layout.disc.mask[p]) continue;
      layout.directions[p] = *disc_to_direction(pixel_center_to_disc(u, v, resolution));
      layout.solid_angles[p] = omega;
      layout.valid_index[p] = static_cast<int>(layout.valid_pixels.size());
      layout.valid_pixels.push_back(p);
    }
  }
  return layout;
}

inline std::optional<Vec3> pixel_to_direction(int u, int v, const ProbeLayout& layout) {
  require(u >= 0 && v >= 0 && u < layout.resolution && v < layout.resolution,
          "pixel_to_direction: pixel index out of range");
  const int p = v * layout.resolution + u;
  if (!layout.valid(p)) return std::nullopt;
  return layout.directions[p];
}

inline PixelCoord direction_to_pixel(const Vec3& d, const ProbeLayout& layout) {
  require(std::abs(length(d) - 1.0) <= 1e-6, "direction_to_pixel: direction must be unit length");
  return disc_to_pixel_center(direction_to_disc(d), layout.resolution);
}

// Bilinear lookup of a probe image (resolution^2 x channels, interleaved) at
// direction d. Only valid pixels contribute; their weights are renormalized.
template <class T>
double sample_probe(const Image<T>& probe, const ProbeLayout& layout, const Vec3& d, int c) {
  const PixelCoord p = disc_to_pixel_center(direction_to_disc(d), layout.resolution);
  const int r = layout.resolution;
  const int x0 = static_cast<int>(std::floor(p.u));
  const int y0 = static_cast<int>(std::floor(p.v));
  const double ax = p.u - x0;
  const double ay = p.v - y0;
  double acc = 0.0;
  double wsum = 0.0;
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const int x = x0 + dx;
      const int y = y0 + dy;
      if (x < 0 || y < 0 || x >= r || y >= r || !layout.valid(y * r + x)) continue;
      const double w = (dx ? ax : 1.0 - ax) * (dy ? ay : 1.0 - ay);
      acc += w * probe(x, y, c);
      wsum += w;
    }
  }
  if (wsum > 1e-12) return acc / wsum;
  // Outside the valid footprint (corner of the disc): nearest valid pixel.
  double best = 1e300;
  double value = 0.0;
  for (int q : layout.valid_pixels) {
    const double du = (q % r) - p.u;
    const double dv = (q / r) - p.v;
    const double dist = du * du + dv * dv;
    if (dist < best) {
      best = dist;
      value = probe(q % r, q / r, c);
    }
  }
  return value;
}

// ---------------------------------------------------------------------------
// Sphere crops from perspective frames.

struct Intrinsics {
  double focal_px = 0.0;
  double cx = 0.0;  // principal point, continuous pixel coordinates
  double cy = 0.0;
};

// An externally supplied circle detection of a sphere in a frame.
struct CircleDetection {
  double center_u = 0.0;
  double center_v = 0.0;
  double radius = 0.0;
  Intrinsics intrinsics;
};

// LDR gamma-encoded square sphere crop with its disc mask and boundary alpha.
struct SphereImage {
  ImageF rgb;
  DiscMask disc;
  bool degraded = false;
  std::vector<std::string> warnings;

  int resolution() const { return rgb.width(); }

  static SphereImage blank(int resolution) {
    SphereImage s;
    s.rgb = ImageF(resolution, resolution, 3);
    s.disc = DiscMask::build(resolution);
    return s;
  }
};

// Resamples the sphere seen by a perspective camera into the view of an
// idealized camera aimed at the sphere center whose frustum is tangent to the
// sphere on all four sides.
inline SphereImage resample_sphere_crop(const ImageF& frame, const CircleDetection& det,
                                        int out_resolution) {
  require(det.radius > 0.0, "resample_sphere_crop: radius must be positive");
  require(det.intrinsics.focal_px > 0.0, "resample_sphere_crop: focal length must be positive");
  require(out_resolution >= 8, "resample_sphere_crop: out_resolution must be >= 8");
  require(frame.channels() >= 1 && frame.width() > 0 && frame.height() > 0,
          "resample_sphere_crop: empty frame");

  SphereImage out = SphereImage::blank(out_resolution);
  out.rgb = ImageF(out_resolution, out_resolution, frame.channels());
  if (det.center_u - det.radius <= 0.0 || det.center_v - det.radius <= 0.0 ||
      det.center_u + det.radius >= frame.width() || det.center_v + det.radius >= frame.height()) {
    out.degraded = true;
    out.warnings.push_back("circle touches the image border; crop is partially clamped");
  }

  // Camera frame: x right, y down, z forward.
  const Intrinsics& k = det.intrinsics;
  const double ox = (det.center_u - k.cx) / k.focal_px;
  const double oy = (det.center_v - k.cy) / k.focal_px;
  const Vec3 axis = normalize(Vec3{ox, oy, 1.0});
  const double off_axis = std::hypot(det.center_u - k.cx, det.center_v - k.cy);
  // Tangential image radius r = (f / cos(alpha)) tan(beta).
  const double tan_half = det.radius / std::hypot(k.focal_px, off_axis);

  Vec3 right = cross(Vec3{0.0, 1.0, 0.0}, axis);
  right = length(right) < 1e-9 ? Vec3{1.0, 0.0, 0.0} : normalize(right);
  const Vec3 down = cross(axis, right);

  for (int j = 0; j < out_resolution; ++j) {
    for (int i = 0; i < out_resolution; ++i) {
      const double xn = 2.0 * (i + 0.5) / out_resolution - 1.0;
      const double yn = 2.0 * (j + 0.5) / out_resolution - 1.0;
      const Vec3 ray = axis + (right * xn + down * yn) * tan_half;
      const double u = k.focal_px * ray.x / ray.z + k.cx;
      const double v = k.focal_px * ray.y / ray.z + k.cy;
      for (int c = 0; c < frame.channels(); ++c)
        out.rgb(i, j, c) = static_cast<float>(sample_bilinear(frame, u, v, c));
    }
  }
  return out;
}

namespace detail {

// Box-filter resampling along one axis with fractional pixel overlaps.
inline ImageF resize_area_axis(const ImageF& in, int out_size, bool horizontal) {
  const int in_size = horizontal ? in.width() : in.height();
  ImageF out = horizontal ? ImageF(out_size, in.height(), in.channels())
                          : ImageF(in.width(), out_size, in.channels());
  const double scale = static_cast<double>(in_size) / out_size;
  const int lines = horizontal ? in.height() : in.width();
  std::vector<double> acc(in.channels());
  for (int o = 0; o < out_size; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    for (int line = 0; line < lines; ++line) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int s = static_cast<int>(std::floor(lo)); s < static_cast<int>(std::ceil(hi)); ++s) {
        const double w = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
        if (w <= 0.0) continue;
        for (int c = 0; c < in.channels(); ++c)
          acc[c] += w * (horizontal ? in(s, line, c) : in(line, s, c));
      }
      for (int c = 0; c < in.channels(); ++c) {
        float& dst = horizontal ? out(o, line, c) : out(line, o, c);
        dst = static_cast<float>(acc[c] / scale);
      }
    }
  }
  return out;
}

}  // namespace detail

inline ImageF resize_area(const ImageF& in, int width, int height) {
  require(width > 0 && height > 0 && width <= in.width() && height <= in.height(),
          "resize_area: only downsampling to a non-empty size is supported");
  return detail::resize_area_axis(detail::resize_area_axis(in, width, true), height, false);
}

inline constexpr int kBackgroundWidth = 135;
inline constexpr int kBackgroundHeight = 192;

// Drops the lower 20% of a 9:16 portrait frame (values in [0, 1]), area-averages
// the rest to 135x192 and recenters values to [-0.5, 0.5].
inline ImageF crop_background(const ImageF& frame) {
  require(frame.width() > 0 && static_cast<long>(frame.width()) * 16 ==
                                   static_cast<long>(frame.height()) * 9,
          "crop_background: frame must be portrait with aspect 9:16");
  require(frame.height() % 5 == 0, "crop_background: frame height must be a multiple of 5");
  const int kept = frame.height() / 5 * 4;
  ImageF top(frame.width(), kept, frame.channels());
  std::copy_n(frame.values().begin(), top.size(), top.values().begin());
  ImageF out = resize_area(top, kBackgroundWidth, kBackgroundHeight);
  for (float& v : out.values()) v -= 0.5f;
  return out;
}

// Column mirror of a probe-sized image; maps direction (x, y, z) to (-x, y, z).
template <class T>
Image<T> flip_probe(const Image<T>& probe) {
  return flip_horizontal(probe);
}

}  // namespace ibrl
