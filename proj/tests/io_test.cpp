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

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include "ibrl/checkpoint.hpp"
#include "ibrl/config.hpp"
#include "ibrl/io/pfm.hpp"
#include "ibrl/io/ppm.hpp"
#include "ibrl/rng.hpp"

namespace ibrl {
namespace {

ImageF random_float_image(int w, int h, int c, std::uint64_t seed) {
  Rng rng(seed);
  ImageF img(w, h, c);
  for (float& v : img.values()) v = static_cast<float>(rng.uniform(-1e3, 1e3));
  return img;
}

TEST(Pfm, RoundTripIsBitExact) {
  for (int c : {1, 3}) {
    const ImageF img = random_float_image(7, 5, c, 3 + c);
    std::stringstream ss;
    io::write_pfm(ss, img);
    const ImageF back = io::read_pfm(ss);
    ASSERT_EQ(back.width(), 7);
    ASSERT_EQ(back.height(), 5);
    ASSERT_EQ(back.channels(), c);
    EXPECT_EQ(std::memcmp(back.values().data(), img.values().data(), img.size() * sizeof(float)), 0);
  }
}

TEST(Pfm, BottomRowComesFirst) {
  ImageF img(1, 2, 1);
  img(0, 0, 0) = 1.0f;
  img(0, 1, 0) = 2.0f;
  std::stringstream ss;
  io::write_pfm(ss, img);
  const std::string s = ss.str();
  float first = 0.0f;
  std::memcpy(&first, s.data() + s.size() - 2 * sizeof(float), sizeof(float));
  EXPECT_EQ(first, 2.0f);
}

TEST(Pfm, MalformedInputsAreParseErrors) {
  const auto fails = [](const std::string& text) {
    std::istringstream is(text);
    EXPECT_THROW(io::read_pfm(is), ParseError) << text;
  };
  fails("P6\n1 1\n-1.0\n");
  fails("PF\n0 1\n-1.0\n");
  fails("PF\n1 1\n1.0\n" + std::string(12, '\0'));
  fails("PF\n1 1\nabc\n");
  fails("PF\n2 2\n-1.0\n" + std::string(12, '\0'));
  fails("PF\n1");
}

TEST(Ppm, RoundTripAndErrors) {
  io::Image8 img(4, 3, 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.values()[i] = static_cast<std::uint8_t>(i * 17);
  std::stringstream ss;
  io::write_ppm(ss, img);
  const io::Image8 back = io::read_ppm(ss);
  EXPECT_EQ(std::vector<std::uint8_t>(back.values().begin(), back.values().end()),
            std::vector<std::uint8_t>(img.values().begin(), img.values().end()));
  // Header comments are skipped.
  std::istringstream commented("P6\n# note\n1 1\n255\nabc");
  EXPECT_EQ(io::read_ppm(commented)(0, 0, 1), 'b');
  std::istringstream p3("P3\n1 1\n255\n1 2 3");
  EXPECT_THROW(io::read_ppm(p3), ParseError);
  std::istringstream deep("P6\n1 1\n65535\n123456");
  EXPECT_THROW(io::read_ppm(deep), ParseError);
  std::istringstream shortdata("P6\n2 1\n255\nabc");
  EXPECT_THROW(io::read_ppm(shortdata), ParseError);
  std::istringstream longdata("P6\n1 1\n255\nabcd");
  EXPECT_THROW(io::read_ppm(longdata), ParseError);
}

TEST(Ppm, Quantization) {
  EXPECT_EQ(io::quantize8(-0.2), 0);
  EXPECT_EQ(io::quantize8(1.7), 255);
  EXPECT_EQ(io::quantize8(0.5), 128);
  for (int b = 0; b < 256; ++b) EXPECT_EQ(io::quantize8(b / 255.0), b);
}

TEST(Config, ParseOverridesAndComments) {
  const RunConfig c = parse_config("# comment\n\ntrain.lr_g = 0.001\ngenerator.encoder_channels=8,16\nenv.light_ratio=1,2 # trailing\ntrain.gan_enabled=false\n");
  EXPECT_EQ(c.model.train.lr_g, 0.001);
  EXPECT_EQ(c.model.generator.encoder_channels, (std::vector<int>{8, 16}));
  EXPECT_EQ(c.synth.environment.light_ratio.lo, 1.0);
  EXPECT_EQ(c.synth.environment.light_ratio.hi, 2.0);
  EXPECT_FALSE(c.model.train.gan_enabled);
}

TEST(Config, ErrorsAreUsageErrors) {
  EXPECT_THROW(parse_config("train.nope=1\n"), UsageError);
  EXPECT_THROW(parse_config("train.lr_g\n"), UsageError);
  EXPECT_THROW(parse_config("train.lr_g=fast\n"), UsageError);
  EXPECT_THROW(parse_config("train.batch_size=0\n"), UsageError);
  EXPECT_THROW(parse_config("train.gan_enabled=maybe\n"), UsageError);
}

TEST(Config, CanonicalTextRoundTripsAndHashes) {
  RunConfig c;
  c.model.train.lambda_rec = 0.75;
  c.synth.scene.albedo = {0.25, 0.5};
  const std::string text = canonical_config(c);
  const RunConfig back = parse_config(text);
  EXPECT_EQ(canonical_config(back), text);
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
  EXPECT_NE(config_hash(c), config_hash(RunConfig{}));
  // Formatting round-trips doubles exactly.
  c.model.train.lr_g = 0.1 + 0.2;
  EXPECT_EQ(parse_config(canonical_config(c)).model.train.lr_g, 0.1 + 0.2);
}

TEST(Checkpoint, ModelRoundTripIsBitExact) {
  const ProbeLayout layout = build_layout(32);
  const FieldSet fields = default_fields(layout, 32);
  RunConfig rc;
  rc.model.generator.encoder_channels = {4, 8};
  rc.model.discriminator.channels = {4};
  Trainer t(rc.model, fields);
  t.baseline() = ImageD(32, 32, 3, -1.25);
  std::stringstream a;
  write_checkpoint(a, t, rc);
  const std::string bytes = a.str();
  std::stringstream in(bytes);
  const LightingModel m = read_checkpoint(in, fields);
  ASSERT_FALSE(m.is_constant());
  EXPECT_EQ(canonical_config(m.config()), canonical_config(rc));
  EXPECT_EQ(m.baseline()(3, 4, 2), -1.25);
  std::stringstream b;
  write_checkpoint(b, *m.trainer(), m.config());
  EXPECT_EQ(b.str(), bytes);
  const ImageF zero(kBackgroundWidth, kBackgroundHeight, 3);
  EXPECT_EQ(m.predict(zero).values.values()[500], t.infer(zero).values.values()[500]);
}

TEST(Checkpoint, ConstantProbe) {
  const FieldSet fields = default_fields(build_layout(32), 32);
  const ImageD probe(32, 32, 3, 0.5);
  std::stringstream ss;
  write_constant_checkpoint(ss, probe, RunConfig{});
  const LightingModel m = read_checkpoint(ss, fields);
  EXPECT_TRUE(m.is_constant());
  EXPECT_TRUE(m.baseline().empty());
  EXPECT_EQ(m.predict(ImageF(kBackgroundWidth, kBackgroundHeight, 3)).values(7, 9, 1), 0.5);
}

TEST(Checkpoint, VersionAndCorruptionErrors) {
  const FieldSet fields = default_fields(build_layout(32), 32);
  std::stringstream ss;
  write_constant_checkpoint(ss, ImageD(32, 32, 3, 0.5), RunConfig{});
  std::string bytes = ss.str();

  std::string future = bytes;
  future.replace(0, 8, "IBRL0099");
  std::istringstream f(future);
  EXPECT_THROW(read_checkpoint(f, fields), VersionError);

  std::string garbage = bytes;
  garbage.replace(0, 8, "NOTACKPT");
  std::istringstream g(garbage);
  try {
    read_checkpoint(g, fields);
    FAIL() << "expected ParseError";
  } catch (const VersionError&) {
    FAIL() << "garbage is not a version mismatch";
  } catch (const ParseError&) {
  }

  std::istringstream t(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_checkpoint(t, fields), ParseError);
}

}  // namespace
}  // namespace ibrl
