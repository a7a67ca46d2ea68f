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

// Evaluation metrics on rendered sphere crops and the dataset-level report.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ibrl/error.hpp"
#include "ibrl/image.hpp"
#include "ibrl/parallel.hpp"
#include "ibrl/probe_geometry.hpp"
#include "ibrl/reflectance_basis.hpp"
#include "ibrl/relight.hpp"
#include "ibrl/scene_synth.hpp"

namespace ibrl {

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) comp_ += (sum_ - t) + v;
    else comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

namespace detail {

template <class A, class B>
void check_metric_shapes(const Image<A>& pred, const Image<B>& truth, std::span<const std::uint8_t> mask,
                         const char* what) {
  require(pred.width() == truth.width() && pred.height() == truth.height() && pred.channels() == truth.channels() &&
              mask.size() == static_cast<std::size_t>(pred.width()) * pred.height(),
          std::string(what) + ": image or mask sizes differ");
}

}  // namespace detail

// Mean |pred - truth| over masked pixels and all channels.
template <class A, class B>
double masked_l1(const Image<A>& pred, const Image<B>& truth, std::span<const std::uint8_t> mask) {
  detail::check_metric_shapes(pred, truth, mask, "masked_l1");
  CompensatedSum sum;
  std::size_t n = 0;
  const int c = pred.channels();
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (int k = 0; k < c; ++k) {
      sum.add(std::abs(static_cast<double>(pred.values()[p * c + k]) - static_cast<double>(truth.values()[p * c + k])));
      ++n;
    }
  }
  require(n > 0, "masked_l1: mask selects no pixels");
  return sum.value() / static_cast<double>(n);
}

struct AngularError {
  double mean_degrees = 0.0;
  std::size_t pixels = 0;   // pixels that entered the mean
  std::size_t skipped = 0;  // masked pixels where either vector is ~0
};

inline constexpr double kAngularNormFloor = 1e-9;

// Mean angle between RGB vectors of two linear images over masked pixels.
template <class A, class B>
AngularError rgb_angular_error(const Image<A>& pred, const Image<B>& truth, std::span<const std::uint8_t> mask) {
  detail::check_metric_shapes(pred, truth, mask, "rgb_angular_error");
  require(pred.channels() == 3, "rgb_angular_error: expected RGB images");
  AngularError out;
  CompensatedSum sum;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    double dp = 0.0, np = 0.0, ng = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double a = pred.values()[p * 3 + c], b = truth.values()[p * 3 + c];
      dp += a * b;
      np += a * a;
      ng += b * b;
    }
    np = std::sqrt(np);
    ng = std::sqrt(ng);
    if (np < kAngularNormFloor || ng < kAngularNormFloor) {
      ++out.skipped;
      continue;
    }
    sum.add(std::acos(std::clamp(dp / (np * ng), -1.0, 1.0)) * 180.0 / std::numbers::pi);
    ++out.pixels;
  }
  out.mean_degrees = out.pixels ? sum.value() / static_cast<double>(out.pixels) : 0.0;
  return out;
}

// Per channel (sum pred - sum truth) / sum truth over masked pixels, with both
// LDR inputs linearized by raising to gamma.
template <class A, class B>
std::array<double, 3> relative_radiance(const Image<A>& pred_ldr, const Image<B>& truth_ldr,
                                        std::span<const std::uint8_t> mask, double gamma = kGamma) {
  detail::check_metric_shapes(pred_ldr, truth_ldr, mask, "relative_radiance");
  require(pred_ldr.channels() == 3, "relative_radiance: expected RGB images");
  std::array<CompensatedSum, 3> sp, st;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < 3; ++c) {
      sp[c].add(std::pow(std::max(0.0, static_cast<double>(pred_ldr.values()[p * 3 + c])), gamma));
      st[c].add(std::pow(std::max(0.0, static_cast<double>(truth_ldr.values()[p * 3 + c])), gamma));
    }
  }
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    if (!(st[c].value() > 0.0)) throw DegenerateInputError("relative_radiance: ground truth is black");
    out[c] = (sp[c].value() - st[c].value()) / st[c].value();
  }
  return out;
}

// Mean forward-difference gradient magnitude over pixels whose right and lower
// neighbors are also masked. Used to compare the detail of rendered mirror balls.
template <class A>
double mean_gradient_magnitude(const Image<A>& img, std::span<const std::uint8_t> mask) {
  require(mask.size() == static_cast<std::size_t>(img.width()) * img.height(),
          "mean_gradient_magnitude: mask size differs");
  const int w = img.width(), h = img.height(), ch = img.channels();
  CompensatedSum sum;
  std::size_t n = 0;
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      if (!mask[p] || !mask[p + 1] || !mask[p + w]) continue;
      double g2 = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double dx = static_cast<double>(img(x + 1, y, c)) - img(x, y, c);
        const double dy = static_cast<double>(img(x, y + 1, c)) - img(x, y, c);
        g2 += dx * dx + dy * dy;
      }
      sum.add(std::sqrt(g2));
      ++n;
    }
  return n ? sum.value() / static_cast<double>(n) : 0.0;
}

// Linear-interpolated quantile of unsorted values.
inline double quantile(std::vector<double> v, double q) {
  require(!v.empty(), "quantile: no values");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(std::floor(pos));
  const std::size_t j = std::min(i + 1, v.size() - 1);
  return v[i] + (pos - static_cast<double>(i)) * (v[j] - v[i]);
}

// ---------------------------------------------------------------------------
// Per-example and dataset evaluation.

struct ExampleScores {
  std::array<double, 3> l1{};  // per Brdf
  double rec_loss = 0.0;
  AngularError angular;         // diffuse sphere
  std::array<double, 3> radiance{};  // diffuse relative radiance per channel
  double mirror_gradient = 0.0;
};

inline std::array<ImageD, 3> render_spheres(const FieldSet& fields, const Probe& log_probe) {
  std::array<ImageD, 3> out;
  for (Brdf b : kAllBrdfs) out[static_cast<int>(b)] = render_ldr(fields[b], log_probe);
  return out;
}

inline ImageD linearize(const ImageD& ldr, double gamma = kGamma) {
  ImageD out(ldr.width(), ldr.height(), ldr.channels());
  for (std::size_t i = 0; i < ldr.size(); ++i) out.values()[i] = std::pow(std::max(0.0, ldr.values()[i]), gamma);
  return out;
}

inline ExampleScores score_example(const FieldSet& fields, const Probe& log_probe, const TrainingExample& ex,
                                   const BrdfWeights& weights = {}) {
  ExampleScores s;
  const auto rendered = render_spheres(fields, log_probe);
  for (int b = 0; b < 3; ++b) {
    const auto& truth = ex.spheres[b];
    s.l1[b] = masked_l1(rendered[b], truth.rgb, truth.disc.mask);
  }
  s.rec_loss = rec_loss(rendered, ex.spheres, weights);
  const int d = static_cast<int>(Brdf::kDiffuse);
  const ImageD truth_d = linearize(image_cast<double>(ex.spheres[d].rgb));
  s.angular = rgb_angular_error(linearize(rendered[d]), truth_d, ex.spheres[d].disc.mask);
  s.radiance = relative_radiance(rendered[d], ex.spheres[d].rgb, ex.spheres[d].disc.mask);
  const int m = static_cast<int>(Brdf::kMirror);
  s.mirror_gradient = mean_gradient_magnitude(rendered[m], ex.spheres[m].disc.mask);
  return s;
}

struct RowSummary {
  std::string name;
  std::size_t count = 0;
  std::array<double, 3> l1_mean{};
  std::array<double, 3> l1_std{};
  double rec_loss = 0.0;
  double angular_mean = 0.0;  // mean over examples of the per-example mean angle
  std::size_t angular_skipped = 0;
  std::array<std::array<double, 3>, 3> radiance_quartiles{};  // [channel][q25, q50, q75]
  double mirror_gradient = 0.0;
};

inline RowSummary summarize(const std::string& name, const std::vector<ExampleScores>& scores) {
  require(!scores.empty(), "evaluate: no examples");
  RowSummary r;
  r.name = name;
  r.count = scores.size();
  const double n = static_cast<double>(scores.size());
  for (int b = 0; b < 3; ++b) {
    CompensatedSum sum, sq;
    for (const auto& s : scores) sum.add(s.l1[b]);
    r.l1_mean[b] = sum.value() / n;
    for (const auto& s : scores) sq.add((s.l1[b] - r.l1_mean[b]) * (s.l1[b] - r.l1_mean[b]));
    r.l1_std[b] = std::sqrt(sq.value() / n);
  }
  CompensatedSum rec, ang, grad;
  for (const auto& s : scores) {
    rec.add(s.rec_loss);
    ang.add(s.angular.mean_degrees);
    grad.add(s.mirror_gradient);
    r.angular_skipped += s.angular.skipped;
  }
  r.rec_loss = rec.value() / n;
  r.angular_mean = ang.value() / n;
  r.mirror_gradient = grad.value() / n;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> v;
    for (const auto& s : scores) v.push_back(s.radiance[c]);
    r.radiance_quartiles[c] = {quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)};
  }
  return r;
}

// Scores `predict` over the examples; results do not depend on thread count.
inline std::vector<ExampleScores> score_examples(const std::vector<TrainingExample>& examples, const FieldSet& fields,
                                                 const std::function<Probe(std::size_t)>& predict, int threads = 1) {
  std::vector<ExampleScores> out(examples.size());
  parallel_for(examples.size(), threads,
               [&](std::size_t i) { out[i] = score_example(fields, predict(i), examples[i]); });
  return out;
}

struct Report {
  std::string config_hash;
  std::vector<RowSummary> rows;

  const RowSummary& row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return r;
    throw UsageError("report has no row '" + name + "'");
  }
};

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Line-oriented key=value form.
inline std::string report_key_values(const Report& report) {
  std::string out = "format=ibrl-report-1\n";
  out += "config_hash=" + report.config_hash + "\n";
  std::string names;
  for (const auto& r : report.rows) names += (names.empty() ? "" : ",") + r.name;
  out += "rows=" + names + "\n";
  static const char* channels[3] = {"r", "g", "b"};
  static const char* qs[3] = {"q25", "q50", "q75"};
  for (const auto& r : report.rows) {
    const std::string p = r.name + ".";
    out += p + "count=" + std::to_string(r.count) + "\n";
    for (Brdf b : kAllBrdfs) {
      const int i = static_cast<int>(b);
      out += p + "l1." + brdf_name(b) + ".mean=" + format_number(r.l1_mean[i]) + "\n";
      out += p + "l1." + brdf_name(b) + ".std=" + format_number(r.l1_std[i]) + "\n";
    }
    out += p + "rec_loss=" + format_number(r.rec_loss) + "\n";
    out += p + "angular_error_deg.diffuse=" + format_number(r.angular_mean) + "\n";
    out += p + "angular_error.skipped_pixels=" + std::to_string(r.angular_skipped) + "\n";
    for (int c = 0; c < 3; ++c)
      for (int q = 0; q < 3; ++q)
        out += p + "relative_radiance." + channels[c] + "." + qs[q] + "=" + format_number(r.radiance_quartiles[c][q]) +
               "\n";
    out += p + "mirror_gradient=" + format_number(r.mirror_gradient) + "\n";
  }
  return out;
}

inline std::string report_table(const Report& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %6s %18s %18s %18s %10s %12s\n", "row", "n", "L1 mirror", "L1 diffuse",
                "L1 matte_silver", "theta_d", "rad_g q50");
  out += line;
  for (const auto& r : report.rows) {
    char cells[3][32];
    for (int b = 0; b < 3; ++b) std::snprintf(cells[b], sizeof cells[b], "%.4f +- %.4f", r.l1_mean[b], r.l1_std[b]);
    std::snprintf(line, sizeof line, "%-10s %6zu %18s %18s %18s %9.3f%s %12.4f\n", r.name.c_str(), r.count, cells[0],
                  cells[1], cells[2], r.angular_mean, "d", r.radiance_quartiles[1][1]);
    out += line;
  }
  return out;
}

}  // namespace ibrl
