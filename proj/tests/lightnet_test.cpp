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

#include "ibrl/lightnet.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "grad_check.hpp"
#include "pipeline_check.hpp"
#include "ibrl/checkpoint.hpp"

namespace ibrl {
namespace {

using testing::gradient_error;
using testing::InputSpec;

struct Data {
  ProbeLayout layout = build_layout(32);
  FieldSet fields = default_fields(layout, 32);
  std::vector<TrainingExample> examples;
  TrainingSet set;

  Data() {
    for (std::uint64_t s = 0; s < 8; ++s) examples.push_back(make_example(100 + s, SynthSpec{}, fields));
    set = TrainingSet::from_examples(examples, layout);
  }
};

const Data& data() {
  static const Data d;
  return d;
}

nn::Tensor<float> random_backgrounds(int n, std::uint64_t seed) {
  Rng rng(seed);
  auto x = nn::Tensor<float>::zeros({n, kBackgroundHeight, kBackgroundWidth, 3});
  for (float& v : x.value()) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  return x;
}

Batch fixed_batch(const TrainingSet& set, const RenderContext<float>& ctx, std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::vector<std::uint8_t> flips(n, 0);
  return assemble_batch(set, idx, flips, ctx);
}

TEST(Generator, OutputShapeAndMaskedCorners) {
  Generator<float> g(GeneratorConfig{}, 1);
  nn::Tape<float> tape(false);
  const auto q = g.forward(tape, random_backgrounds(2, 3), false);
  ASSERT_EQ(q.shape(), (nn::Shape{2, 32, 32, 3}));
  const DiscMask disc = DiscMask::build(32);
  for (int n = 0; n < 2; ++n)
    for (int p = 0; p < 1024; ++p)
      if (!disc.mask[p]) {
        for (int c = 0; c < 3; ++c) EXPECT_EQ(q.value()[(n * 1024 + p) * 3 + c], 0.0f);
      }
  EXPECT_GT(g.store().parameter_count(), 1000000u);
}

TEST(Generator, RejectsWrongInputShape) {
  Generator<float> g(GeneratorConfig{}, 1);
  nn::Tape<float> tape(false);
  EXPECT_THROW(g.forward(tape, nn::Tensor<float>::zeros({1, 135, 192, 3}), false), UsageError);
  EXPECT_THROW(g.forward(tape, nn::Tensor<float>::zeros({1, 192, 135, 1}), false), UsageError);
}

TEST(Generator, InitialOutputsAreBounded) {
  const auto x = random_backgrounds(1, 5);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Generator<float> g(GeneratorConfig{}, seed);
    nn::Tape<float> tape(false);
    for (float v : g.forward(tape, x, false).value()) worst = std::max(worst, static_cast<double>(std::abs(v)));
  }
  EXPECT_LT(worst, 20.0);
}

TEST(Generator, SeedDeterminism) {
  const auto x = random_backgrounds(2, 6);
  Generator<float> a(GeneratorConfig{}, 42), b(GeneratorConfig{}, 42), c(GeneratorConfig{}, 43);
  nn::Tape<float> tape(false);
  const auto qa = a.forward(tape, x, false), qb = b.forward(tape, x, false), qc = c.forward(tape, x, false);
  bool differs = false;
  for (std::size_t i = 0; i < qa.numel(); ++i) {
    ASSERT_EQ(qa.value()[i], qb.value()[i]);
    differs = differs || qa.value()[i] != qc.value()[i];
  }
  EXPECT_TRUE(differs);
}

TEST(Discriminator, OutputsProbabilities) {
  Discriminator<float> d(DiscriminatorConfig{}, 3);
  Rng rng(1);
  auto x = nn::Tensor<float>::zeros({4, 32, 32, 3});
  for (float& v : x.value()) v = static_cast<float>(rng.uniform());
  nn::Tape<float> tape(false);
  const auto y = d.forward(tape, x, true);
  ASSERT_EQ(y.shape(), (nn::Shape{4, 1}));
  for (float v : y.value()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
  EXPECT_THROW(d.forward(tape, nn::Tensor<float>::zeros({1, 16, 16, 3}), false), UsageError);
}

TEST(CleanPlate, CornersAndInterpolation) {
  const std::array<std::array<double, 3>, 4> corners = {
      {{0.1, 0.2, 0.3}, {0.5, 0.6, 0.7}, {0.9, 0.8, 0.7}, {0.3, 0.2, 0.1}}};
  const ImageD plate = hallucinate_background(corners, 32);
  for (int c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(plate(0, 0, c), corners[0][c]);
    EXPECT_DOUBLE_EQ(plate(31, 0, c), corners[1][c]);
    EXPECT_DOUBLE_EQ(plate(0, 31, c), corners[2][c]);
    EXPECT_DOUBLE_EQ(plate(31, 31, c), corners[3][c]);
    const double center = (plate(15, 15, c) + plate(16, 15, c) + plate(15, 16, c) + plate(16, 16, c)) / 4.0;
    EXPECT_NEAR(center, (corners[0][c] + corners[1][c] + corners[2][c] + corners[3][c]) / 4.0, 1e-12);
  }
  const ImageD flat = hallucinate_background({{{0.4, 0.4, 0.4}, {0.4, 0.4, 0.4}, {0.4, 0.4, 0.4}, {0.4, 0.4, 0.4}}}, 8);
  for (double v : flat.values()) EXPECT_NEAR(v, 0.4, 1e-15);
}

TEST(CleanPlate, CompositeUsesAlpha) {
  ImageD sphere(2, 2, 3, 0.8), plate(2, 2, 3, 0.2);
  const std::vector<double> alpha = {1.0, 0.0, 0.5, 0.25};
  const ImageD out = composite_on_plate(sphere, plate, alpha);
  for (int c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(out(0, 0, c), 0.8);
    EXPECT_DOUBLE_EQ(out(1, 0, c), 0.2);
    EXPECT_DOUBLE_EQ(out(0, 1, c), 0.5);
    EXPECT_DOUBLE_EQ(out(1, 1, c), 0.35);
  }
  // Disc pixels with center inside keep their coverage; all others blend fully to the plate.
  const DiscMask disc = DiscMask::build(32);
  const auto a = composite_alpha(disc);
  EXPECT_EQ(a[0], 0.0);
  EXPECT_EQ(a[16 * 32 + 16], 1.0);
}

TEST(AdvLoss, ReferenceValues) {
  nn::Tape<double> tape(false);
  auto opt = adv_loss(tape, nn::Tensor<double>::from({2, 1}, {1 - 1e-7, 1.0}), nn::Tensor<double>::from({2, 1}, {1e-7, 0.0}));
  EXPECT_NEAR(opt.value.item(), 0.0, 1e-6);
  auto half = adv_loss(tape, nn::Tensor<double>::from({3, 1}, {0.5, 0.5, 0.5}), nn::Tensor<double>::from({3, 1}, {0.5, 0.5, 0.5}));
  EXPECT_NEAR(half.g_term.item(), -0.6931, 1e-4);
  EXPECT_NEAR(half.value.item(), 2.0 * std::log(0.5), 1e-12);
  auto worst = adv_loss(tape, nn::Tensor<double>::from({1, 1}, {0.0}), nn::Tensor<double>::from({1, 1}, {1.0}));
  EXPECT_TRUE(std::isfinite(worst.value.item()));
  EXPECT_NEAR(worst.value.item(), 2.0 * std::log(1e-7), 1e-6);
}

TEST(GradientCheck, FullPipelineThroughDiscriminator) {
  // Probe ranges straddle the soft-clip knee.
  const std::vector<InputSpec> spec = {{{2, 8, 8, 3}, -2.5, 0.8}};
  double worst_d = 0.0, worst_f = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const testing::Pipeline p(seed, seed % 2 ? 0.5 : 0.999);
    worst_d = std::max(worst_d, gradient_error<double>(p, spec, seed, 2e-4));
    worst_f = std::max(worst_f, gradient_error<float>(p, spec, seed, 1e-3));
  }
  EXPECT_LT(worst_d, 1e-5);
  EXPECT_LT(worst_f, 1e-3);
}

TEST(Trainer, LambdaOneIgnoresDiscriminator) {
  ModelConfig mc;
  mc.train.lambda_rec = 1.0;
  mc.train.batch_size = 2;
  Trainer a(mc, data().fields), b(mc, data().fields);
  for (float& v : b.discriminator().store().parameter_tensors()[0].value()) v += 0.5f;
  const Batch batch = fixed_batch(data().set, a.render_context(), 2);
  a.step(batch);
  b.step(batch);
  const auto pa = a.generator().store().parameter_tensors(), pb = b.generator().store().parameter_tensors();
  for (std::size_t k = 0; k < pa.size(); ++k)
    for (std::size_t i = 0; i < pa[k].numel(); ++i) ASSERT_EQ(pa[k].value()[i], pb[k].value()[i]);
}

double training_rec_loss(Trainer& t, const Batch& batch) {
  nn::Tape<float> tape(false);
  auto q = t.generator().forward(tape, batch.input, true);
  return rec_loss_batch(tape, t.render_context(), q, batch.targets, t.config().train.weights).total.item();
}

TEST(Trainer, SingleStepDecreasesLoss) {
  int decreased = 0;
  const int trials = 20;
  for (int seed = 0; seed < trials; ++seed) {
    ModelConfig mc;
    mc.train.gan_enabled = false;
    mc.train.seed = seed;
    Trainer t(mc, data().fields);
    const Batch batch = fixed_batch(data().set, t.render_context(), 4);
    const double before = t.step(batch).rec_loss;
    decreased += training_rec_loss(t, batch) < before;
  }
  EXPECT_GE(decreased, trials * 9 / 10);
}

TEST(Trainer, LossesStayFinite) {
  ModelConfig mc;
  mc.train.batch_size = 2;
  Trainer t(mc, data().fields);
  for (int i = 0; i < 1000; ++i) {
    const StepLog log = t.step(data().set);
    ASSERT_TRUE(std::isfinite(log.rec_loss) && std::isfinite(log.adv) && std::isfinite(log.d_loss) &&
                std::isfinite(log.g_loss))
        << "step " << i;
    ASSERT_GT(log.d_real, 0.0);
    ASSERT_LT(log.d_fake, 1.0);
  }
}

TEST(Trainer, ResumeIsBitIdentical) {
  RunConfig rc;
  rc.model.train.batch_size = 2;
  Trainer a(rc.model, data().fields);
  for (int i = 0; i < 3; ++i) a.step(data().set);
  std::stringstream ss;
  write_checkpoint(ss, a, rc);
  const LightingModel resumed = read_checkpoint(ss, data().fields);
  Trainer& b = *resumed.trainer();
  EXPECT_EQ(b.step_count(), 3u);
  for (int i = 0; i < 3; ++i) {
    const StepLog la = a.step(data().set), lb = b.step(data().set);
    EXPECT_EQ(la.rec_loss, lb.rec_loss);
    EXPECT_EQ(la.adv, lb.adv);
    EXPECT_EQ(la.g_loss, lb.g_loss);
  }
}

TEST(Trainer, InferMatchesInferenceForward) {
  ModelConfig mc;
  Trainer t(mc, data().fields);
  t.step(data().set);
  const ImageF zero(kBackgroundWidth, kBackgroundHeight, 3);
  const Probe p = t.infer(zero);
  nn::Tape<float> tape(false);
  const auto q = t.generator().forward(tape, nn::Tensor<float>::zeros({1, kBackgroundHeight, kBackgroundWidth, 3}), false);
  for (std::size_t i = 0; i < q.numel(); ++i) EXPECT_EQ(p.values.values()[i], static_cast<double>(q.value()[i]));
  // Inference does not touch the running statistics.
  const Probe again = t.infer(zero);
  for (std::size_t i = 0; i < q.numel(); ++i) EXPECT_EQ(again.values.values()[i], p.values.values()[i]);
}

TEST(Augmentation, FlipLeavesLossInvariant) {
  const Data& d = data();
  const auto ctx = RenderContext<double>::build(d.fields);
  const Probe q = oracle_log_probe(d.examples[0], d.layout);
  // A perturbed probe so the loss is not trivially zero.
  std::vector<double> qv(q.values.values().begin(), q.values.values().end());
  Rng rng(2);
  for (std::size_t i = 0; i < qv.size(); ++i)
    if (qv[i] != 0.0) qv[i] += rng.uniform(-0.5, 0.5);
  std::array<std::vector<double>, 3> targets, flipped_targets;
  const int s = 32;
  for (int b = 0; b < 3; ++b) {
    const auto& rgb = d.examples[0].spheres[b].rgb;
    targets[b].resize(rgb.size());
    flipped_targets[b].resize(rgb.size());
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x)
        for (int c = 0; c < 3; ++c) {
          const double v = soft_clip<double>(rgb(x, y, c));
          targets[b][(y * s + x) * 3 + c] = v;
          flipped_targets[b][(y * s + (s - 1 - x)) * 3 + c] = v;
        }
  }
  std::vector<double> fq(qv.size());
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) fq[(y * 32 + (31 - x)) * 3 + c] = qv[(y * 32 + x) * 3 + c];
  nn::Tape<double> tape(false);
  const double a = rec_loss_batch(tape, ctx, nn::Tensor<double>::from({1, 32, 32, 3}, qv), targets, {}).total.item();
  const double b = rec_loss_batch(tape, ctx, nn::Tensor<double>::from({1, 32, 32, 3}, fq), flipped_targets, {}).total.item();
  EXPECT_GT(a, 0.01);
  EXPECT_NEAR(a, b, 1e-6);
}

TEST(Augmentation, FlippedBatchMirrorsInputsAndTargets) {
  const Data& d = data();
  const auto ctx = RenderContext<float>::build(d.fields);
  const std::vector<std::size_t> idx = {1};
  const Batch plain = assemble_batch(d.set, idx, std::vector<std::uint8_t>{0}, ctx);
  const Batch flip = assemble_batch(d.set, idx, std::vector<std::uint8_t>{1}, ctx);
  const int w = kBackgroundWidth;
  for (int y = 0; y < kBackgroundHeight; y += 17)
    for (int x = 0; x < w; ++x)
      EXPECT_EQ(flip.input.value()[(y * w + x) * 3], plain.input.value()[(y * w + (w - 1 - x)) * 3]);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int b = 0; b < 3; ++b)
        EXPECT_EQ(flip.targets[b][(y * 32 + x) * 3 + 1], plain.targets[b][(y * 32 + 31 - x) * 3 + 1]);
}

}  // namespace
}  // namespace ibrl
