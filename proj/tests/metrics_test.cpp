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

#include "ibrl/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "ibrl/rng.hpp"
#include "synth_fixtures.hpp"

namespace ibrl {
namespace {

std::vector<std::uint8_t> full_mask(int w, int h) { return std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 1); }

ImageD random_image(int w, int h, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  ImageD img(w, h, 3);
  for (double& v : img.values()) v = rng.uniform(lo, hi);
  return img;
}

TEST(MaskedL1, Basics) {
  const ImageD a = random_image(6, 5, 1);
  const auto mask = full_mask(6, 5);
  EXPECT_EQ(masked_l1(a, a, mask), 0.0);
  ImageD b = a;
  for (double& v : b.values()) v += 0.1;
  EXPECT_NEAR(masked_l1(b, a, mask), 0.1, 1e-12);
  // Unmasked pixels are ignored.
  auto half = mask;
  ImageD c = a;
  for (std::size_t p = 0; p < half.size(); p += 2) {
    half[p] = 0;
    for (int k = 0; k < 3; ++k) c.values()[p * 3 + k] += 5.0;
  }
  EXPECT_EQ(masked_l1(c, a, half), 0.0);
  EXPECT_THROW(masked_l1(a, random_image(5, 5, 2), mask), UsageError);
  EXPECT_THROW(masked_l1(a, a, full_mask(2, 2)), UsageError);
}

TEST(MaskedL1, TriangleInequality) {
  const auto mask = full_mask(8, 8);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const ImageD a = random_image(8, 8, 3 * s), b = random_image(8, 8, 3 * s + 1), c = random_image(8, 8, 3 * s + 2);
    EXPECT_LE(masked_l1(a, c, mask), masked_l1(a, b, mask) + masked_l1(b, c, mask) + 1e-15);
  }
}

TEST(AngularError, ReferenceValues) {
  const auto mask = full_mask(4, 4);
  const ImageD a = random_image(4, 4, 5, 0.1, 1.0);
  EXPECT_NEAR(rgb_angular_error(a, a, mask).mean_degrees, 0.0, 1e-6);
  ImageD tripled = a;
  for (double& v : tripled.values()) v *= 3.0;
  EXPECT_NEAR(rgb_angular_error(tripled, a, mask).mean_degrees, 0.0, 1e-6);

  ImageD red(4, 4, 3), green(4, 4, 3);
  for (int p = 0; p < 16; ++p) {
    red.values()[p * 3] = 1.0;
    green.values()[p * 3 + 1] = 1.0;
  }
  const AngularError e = rgb_angular_error(red, green, mask);
  EXPECT_NEAR(e.mean_degrees, 90.0, 1e-12);
  EXPECT_EQ(e.pixels, 16u);
  EXPECT_EQ(e.skipped, 0u);
}

TEST(AngularError, SymmetricScaleInvariantAndSkipsBlack) {
  const auto mask = full_mask(5, 5);
  const ImageD a = random_image(5, 5, 6, 0.05, 1.0), b = random_image(5, 5, 7, 0.05, 1.0);
  const double ab = rgb_angular_error(a, b, mask).mean_degrees;
  EXPECT_NEAR(ab, rgb_angular_error(b, a, mask).mean_degrees, 1e-12);
  ImageD scaled = a;
  for (double& v : scaled.values()) v *= 0.01;
  EXPECT_NEAR(rgb_angular_error(scaled, b, mask).mean_degrees, ab, 1e-9);
  ImageD holes = a;
  for (int k = 0; k < 3; ++k) holes.values()[k] = 0.0;
  const AngularError e = rgb_angular_error(holes, b, mask);
  EXPECT_EQ(e.skipped, 1u);
  EXPECT_EQ(e.pixels, 24u);
}

TEST(RelativeRadiance, GammaLinearization) {
  const auto mask = full_mask(4, 3);
  const ImageD gt = random_image(4, 3, 8, 0.1, 0.4);
  for (double v : relative_radiance(gt, gt, mask)) EXPECT_EQ(v, 0.0);
  ImageD pred = gt;
  for (double& v : pred.values()) v *= std::pow(2.0, 1.0 / 2.2);
  for (double v : relative_radiance(pred, gt, mask)) EXPECT_NEAR(v, 1.0, 1e-12);
  EXPECT_THROW(relative_radiance(gt, ImageD(4, 3, 3), mask), DegenerateInputError);
}

TEST(GradientMagnitude, ConstantAndRamp) {
  const auto mask = full_mask(6, 6);
  EXPECT_EQ(mean_gradient_magnitude(ImageD(6, 6, 3, 0.4), mask), 0.0);
  ImageD ramp(6, 6, 3);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x)
      for (int c = 0; c < 3; ++c) ramp(x, y, c) = 0.05 * x;
  EXPECT_NEAR(mean_gradient_magnitude(ramp, mask), 0.05 * std::sqrt(3.0), 1e-12);
}

TEST(Quantile, Interpolates) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({10, 0, 20, 30, 40}, 0.25), 10.0);
  EXPECT_THROW(quantile({}, 0.5), UsageError);
}

TEST(Summary, MeanStdAndQuartiles) {
  std::vector<ExampleScores> scores(4);
  for (int i = 0; i < 4; ++i) {
    scores[i].l1 = {0.1 * (i + 1), 0.2, 0.0};
    scores[i].angular.mean_degrees = i;
    scores[i].radiance = {static_cast<double>(i), 0.0, -1.0};
  }
  const RowSummary r = summarize("model", scores);
  EXPECT_NEAR(r.l1_mean[0], 0.25, 1e-15);
  EXPECT_NEAR(r.l1_std[0], std::sqrt(0.0125), 1e-15);
  EXPECT_NEAR(r.l1_std[1], 0.0, 1e-15);
  EXPECT_NEAR(r.angular_mean, 1.5, 1e-15);
  EXPECT_NEAR(r.radiance_quartiles[0][0], 0.75, 1e-15);
  EXPECT_NEAR(r.radiance_quartiles[0][1], 1.5, 1e-15);
  EXPECT_NEAR(r.radiance_quartiles[0][2], 2.25, 1e-15);
  EXPECT_THROW(summarize("empty", {}), UsageError);
}

TEST(Report, KeyValueFormat) {
  Report rep;
  rep.config_hash = "abc";
  std::vector<ExampleScores> s(2);
  s[0].l1 = {0.5, 0.25, 0.125};
  s[1].l1 = {0.5, 0.25, 0.125};
  rep.rows.push_back(summarize("model", s));
  const std::string kv = report_key_values(rep);
  EXPECT_EQ(kv.rfind("format=ibrl-report-1\n", 0), 0u);
  EXPECT_NE(kv.find("config_hash=abc\n"), std::string::npos);
  EXPECT_NE(kv.find("rows=model\n"), std::string::npos);
  EXPECT_NE(kv.find("model.l1.diffuse.mean=0.25\n"), std::string::npos);
  EXPECT_NE(kv.find("model.count=2\n"), std::string::npos);
  for (std::size_t pos = 0, next; pos < kv.size(); pos = next + 1) {
    next = kv.find('\n', pos);
    ASSERT_NE(next, std::string::npos);
    EXPECT_NE(kv.substr(pos, next - pos).find('='), std::string::npos);
  }
  EXPECT_THROW(rep.row("baseline"), UsageError);
  EXPECT_NE(report_table(rep).find("model"), std::string::npos);
}

TEST(Evaluate, OracleProbesOnUnclippedExamples) {
  const ProbeLayout layout = build_layout(32);
  const FieldSet fields = default_fields(layout, 32);
  const auto examples = testing::unclipped_examples(6, 11, fields);
  const auto scores = score_examples(examples, fields, [&](std::size_t i) { return oracle_log_probe(examples[i], layout); }, 2);
  for (const auto& s : scores) {
    for (double l : s.l1) EXPECT_LT(l, 1e-3);
    EXPECT_LT(s.angular.mean_degrees, 0.1);
    for (double r : s.radiance) EXPECT_LT(std::abs(r), 1e-3);
  }
  // Thread count does not change the scores.
  const auto serial = score_examples(examples, fields, [&](std::size_t i) { return oracle_log_probe(examples[i], layout); }, 1);
  for (std::size_t i = 0; i < scores.size(); ++i) EXPECT_EQ(scores[i].l1, serial[i].l1);
}

}  // namespace
}  // namespace ibrl
