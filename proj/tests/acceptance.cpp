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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
//   acceptance [--only A1,A4,...] [--a5-steps N] [--threads N]

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ibrl/checkpoint.hpp"
#include "ibrl/cli.hpp"
#include "ibrl/io/pfm.hpp"
#include "ibrl/metrics.hpp"
#include "ibrl/probe_geometry.hpp"
#include "ibrl/relight.hpp"
#include "ibrl/rng.hpp"
#include "pipeline_check.hpp"
#include "synth_fixtures.hpp"

namespace ibrl {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Settings {
  std::vector<std::string> only;
  int a5_steps = 10000;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

void progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

Outcome geometry_conservation() {
  const auto t0 = Clock::now();
  double worst_angle = 0.0;
  std::array<double, 2> rel{};
  const std::array<int, 2> res{32, 256};
  for (int k = 0; k < 2; ++k) {
    const ProbeLayout layout = build_layout(res[k]);
    double total = 0.0;
    for (int p : layout.valid_pixels) total += layout.solid_angles[p];
    rel[k] = std::abs(total - 4.0 * std::numbers::pi) / (4.0 * std::numbers::pi);
    Rng rng(17 + k);
    for (int p : layout.valid_pixels) {
      const Vec3 d = layout.directions[p];
      const PixelCoord pc = direction_to_pixel(d, layout);
      const Vec3 back = *disc_to_direction(pixel_center_to_disc(pc.u, pc.v, layout.resolution));
      worst_angle = std::max(worst_angle, std::acos(std::clamp(dot(d, back), -1.0, 1.0)));
    }
    // Off-center positions inside the disc as well.
    for (int i = 0; i < 10000; ++i) {
      const double u = rng.uniform(0.0, res[k] - 1.0), v = rng.uniform(0.0, res[k] - 1.0);
      const auto d = disc_to_direction(pixel_center_to_disc(u, v, res[k]));
      if (!d) continue;
      const PixelCoord pc = direction_to_pixel(*d, layout);
      const Vec3 back = *disc_to_direction(pixel_center_to_disc(pc.u, pc.v, res[k]));
      worst_angle = std::max(worst_angle, std::acos(std::clamp(dot(*d, back), -1.0, 1.0)));
    }
  }
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = rel[0] < 0.01 && rel[1] < 0.001 && worst_angle < 1e-6 && t < 1.0;
  o.detail = "solid-angle error 32x32 " + fmt(rel[0]) + " (<0.01), 256x256 " + fmt(rel[1]) +
             " (<0.001); round trip " + fmt(worst_angle) + " rad (<1e-6); " + fmt(t) + " s (<1)";
  return o;
}

Outcome soft_clip_values() {
  const auto t0 = Clock::now();
  const double at_one = soft_clip(1.0);
  bool monotone = true, finite = true;
  double prev = -std::numeric_limits<double>::infinity();
  const int n = 100000;
  for (int i = 0; i <= n; ++i) {
    const double p = -100.0 + 200.0 * i / n;
    const double v = soft_clip(p);
    finite = finite && std::isfinite(v) && std::isfinite(soft_clip_derivative(p));
    monotone = monotone && v >= prev;
    prev = v;
  }
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = std::abs(at_one - 0.982671) <= 1e-6 && monotone && finite && t < 1.0;
  o.detail = "soft_clip(1) = " + fmt(at_one) + " (0.982671 +- 1e-6); monotone " + (monotone ? "yes" : "no") +
             "; finite on [-100, 100] " + (finite ? "yes" : "no") + "; " + fmt(t) + " s (<1)";
  return o;
}

Outcome differentiability() {
  const auto t0 = Clock::now();
  const std::vector<testing::InputSpec> spec = {{{2, 8, 8, 3}, -2.5, 0.8}};
  double worst_d = 0.0, worst_f = 0.0;
  const int configs = 20;
  for (std::uint64_t seed = 1; seed <= configs; ++seed) {
    const testing::Pipeline p(seed, seed % 2 ? 0.5 : 0.999);
    worst_d = std::max(worst_d, testing::gradient_error<double>(p, spec, seed, 2e-4));
    worst_f = std::max(worst_f, testing::gradient_error<float>(p, spec, seed, 1e-3));
  }
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = worst_d < 1e-5 && worst_f < 1e-3 && t < 60.0;
  o.detail = std::to_string(configs) + " configurations; max relative error 64-bit " + fmt(worst_d) +
             " (<1e-5), 32-bit " + fmt(worst_f) + " (<1e-3); " + fmt(t) + " s (<60)";
  return o;
}

Outcome overfit(const Settings& s) {
  const auto t0 = Clock::now();
  const ProbeLayout layout = build_layout(32);
  const FieldSet fields = default_fields(layout, 32);
  const auto examples = generate_examples(16, 4, SynthSpec{}, fields, s.threads);
  const TrainingSet set = TrainingSet::from_examples(examples, layout);
  ModelConfig mc;
  mc.train.gan_enabled = false;
  Trainer trainer(mc, fields);
  double best = std::numeric_limits<double>::infinity();
  int best_step = 0;
  for (int step = 1; step <= 2000; ++step) {
    trainer.step(set);
    if (step % 100 == 0) {
      const double l = trainer.evaluate_rec_loss(set);
      if (l < best) best = l, best_step = step;
      progress("A4 step " + std::to_string(step) + " L_rec " + fmt(l));
    }
  }
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = best < 0.02 && t < 600.0;
  o.detail = "16 examples, GAN off: best mean L_rec " + fmt(best) + " at step " + std::to_string(best_step) +
             " (<0.02 within 2000 steps); " + fmt(t) + " s (<600)";
  return o;
}

struct TrainedPair {
  RowSummary gan, plain, baseline;
  double gan_seconds = 0.0;
};

RowSummary train_and_score(const ModelConfig& mc, const FieldSet& fields, const TrainingSet& set,
                           const std::vector<TrainingExample>& test, int steps, int threads, RowSummary* baseline,
                           const std::string& tag) {
  auto trainer = std::make_shared<Trainer>(mc, fields);
  trainer->baseline() = set.mean_log_probe;
  for (int step = 1; step <= steps; ++step) {
    const StepLog log = trainer->step(set);
    if (step % 500 == 0) progress(tag + " step " + std::to_string(step) + " rec " + fmt(log.rec_loss));
  }
  RunConfig rc;
  rc.model = mc;
  const Report r =
      cli::evaluate(test, LightingModel::from_trainer(trainer, rc), fields, baseline != nullptr, false, threads);
  if (baseline) *baseline = r.row("baseline");
  return r.row("model");
}

TrainedPair train_pair(const Settings& s) {
  TrainedPair out;
  const ProbeLayout layout = build_layout(32);
  const FieldSet fields = default_fields(layout, 32);
  const auto t0 = Clock::now();
  const auto train = generate_examples(2048, 2048, SynthSpec{}, fields, s.threads);
  const auto test = generate_examples(256, 9001, SynthSpec{}, fields, s.threads);
  const TrainingSet set = TrainingSet::from_examples(train, layout);
  progress("synthesized 2304 examples in " + fmt(seconds_since(t0)) + " s");
  ModelConfig gan;
  out.gan = train_and_score(gan, fields, set, test, s.a5_steps, s.threads, &out.baseline, "GAN");
  out.gan_seconds = seconds_since(t0);
  ModelConfig plain;
  plain.train.gan_enabled = false;
  out.plain = train_and_score(plain, fields, set, test, s.a5_steps, s.threads, nullptr, "L_rec only");
  return out;
}

Outcome generalization(const TrainedPair& p, const Settings& s) {
  const double gain = 1.0 - p.gan.l1_mean[1] / p.baseline.l1_mean[1];
  Outcome o;
  o.pass = gain >= 0.2 && p.gan.angular_mean < p.baseline.angular_mean && p.gan_seconds < 7200.0;
  o.detail = "2048 train / 256 held out, " + std::to_string(s.a5_steps) + " steps: L1(d) model " +
             fmt(p.gan.l1_mean[1]) + " vs baseline " + fmt(p.baseline.l1_mean[1]) + " (" + fmt(100.0 * gain) +
             "% better, need >=20%); theta(d) " + fmt(p.gan.angular_mean) + " vs " + fmt(p.baseline.angular_mean) +
             " deg; " + fmt(p.gan_seconds) + " s (<7200)";
  return o;
}

Outcome oracle_inversion(const Settings& s) {
  const auto t0 = Clock::now();
  const ProbeLayout layout = build_layout(32);
  const FieldSet fields = default_fields(layout, 32);
  const auto examples = testing::unclipped_examples(32, 6, fields);
  const auto scores = score_examples(
      examples, fields, [&](std::size_t i) { return oracle_log_probe(examples[i], layout); }, s.threads);
  const RowSummary r = summarize("oracle", scores);
  double worst_rec = 0.0, worst_angle = 0.0;
  for (const auto& sc : scores) {
    worst_rec = std::max(worst_rec, sc.rec_loss);
    worst_angle = std::max(worst_angle, sc.angular.mean_degrees);
  }
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = worst_rec < 1e-4 && worst_angle < 0.1 && t < 10.0;
  o.detail = std::to_string(examples.size()) + " unclipped examples: L_rec mean " + fmt(r.rec_loss) + " max " +
             fmt(worst_rec) + " (<1e-4); theta mean " + fmt(r.angular_mean) + " max " + fmt(worst_angle) +
             " deg (<0.1); " + fmt(t) + " s (<10)";
  return o;
}

Outcome adversarial_effect(const TrainedPair& p) {
  const double degrade = p.gan.l1_mean[1] / p.plain.l1_mean[1] - 1.0;
  Outcome o;
  o.pass = p.gan.mirror_gradient > p.plain.mirror_gradient && degrade <= 0.15;
  o.detail = "mirror gradient GAN " + fmt(p.gan.mirror_gradient) + " vs L_rec only " + fmt(p.plain.mirror_gradient) +
             " (must exceed); L1(d) GAN " + fmt(p.gan.l1_mean[1]) + " vs " + fmt(p.plain.l1_mean[1]) + " (" +
             fmt(100.0 * degrade) + "% worse, <=15%); L1(m) " + fmt(p.gan.l1_mean[0]) + " vs " +
             fmt(p.plain.l1_mean[0]);
  return o;
}

int cli_run(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "ibrl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream os, es;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), os, es);
  if (code != kExitOk) std::cerr << es.str();
  if (out) *out = os.str();
  return code;
}

Outcome format_determinism() {
  std::vector<std::string> notes;
  bool pass = true;

  // PFM: random finite values plus extremes.
  ImageF img(13, 7, 3);
  Rng rng(8);
  for (float& v : img.values()) v = static_cast<float>(rng.uniform(-1e4, 1e4));
  img.values()[0] = std::numeric_limits<float>::denorm_min();
  img.values()[1] = std::numeric_limits<float>::max();
  img.values()[2] = -0.0f;
  std::stringstream pfm;
  io::write_pfm(pfm, img);
  const ImageF back = io::read_pfm(pfm);
  const bool pfm_ok = back.width() == 13 && back.height() == 7 &&
                      std::memcmp(back.values().data(), img.values().data(), img.size() * sizeof(float)) == 0;
  pass = pass && pfm_ok;
  notes.push_back(std::string("PFM ") + (pfm_ok ? "bit-exact" : "MISMATCH"));

  // Checkpoint: write, read, write again.
  const ProbeLayout layout = build_layout(32);
  const FieldSet fields = default_fields(layout, 32);
  RunConfig rc;
  rc.model.train.batch_size = 2;
  const auto examples = generate_examples(4, 12, SynthSpec{}, fields);
  const TrainingSet set = TrainingSet::from_examples(examples, layout);
  Trainer t(rc.model, fields);
  t.baseline() = set.mean_log_probe;
  for (int i = 0; i < 3; ++i) t.step(set);
  std::stringstream first;
  write_checkpoint(first, t, rc);
  const std::string bytes = first.str();
  std::stringstream in(bytes);
  const LightingModel m = read_checkpoint(in, fields);
  std::stringstream second;
  write_checkpoint(second, *m.trainer(), m.config());
  const StepLog la = t.step(set), lb = m.trainer()->step(set);
  const bool ckpt_ok = second.str() == bytes && la.rec_loss == lb.rec_loss && la.g_loss == lb.g_loss;
  pass = pass && ckpt_ok;
  notes.push_back(std::string("checkpoint ") + (ckpt_ok ? "bit-exact" : "MISMATCH"));

  // Two end-to-end runs through the command line.
  const fs::path root = fs::temp_directory_path() / "ibrl_acceptance_a8";
  fs::remove_all(root);
  fs::create_directories(root);
  cli::write_text(root / "run.cfg",
                  "generator.encoder_channels=8,16\ndiscriminator.channels=8\ntrain.batch_size=4\n");
  std::array<std::string, 2> reports;
  bool runs_ok = true;
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = root / ("run" + std::to_string(k));
    fs::create_directories(dir);
    const std::string cfg = (root / "run.cfg").string();
    runs_ok = runs_ok &&
              cli_run({"--threads", "1", "--config", cfg, "synth", "--count", "12", "--seed", "77", "--out",
                       (dir / "data").string()}) == kExitOk &&
              cli_run({"--threads", "1", "--config", cfg, "train", "--data", (dir / "data").string(), "--seed", "3",
                       "--steps", "20", "--log-every", "0", "--out", (dir / "model.ckpt").string()}) == kExitOk &&
              cli_run({"--threads", "1", "eval", "--data", (dir / "data").string(), "--checkpoint",
                       (dir / "model.ckpt").string(), "--out", (dir / "report.txt").string()}) == kExitOk;
    if (runs_ok) reports[k] = cli::read_text(dir / "report.txt");
  }
  const bool same = runs_ok && !reports[0].empty() && reports[0] == reports[1];
  fs::remove_all(root);
  pass = pass && same;
  notes.push_back(std::string("two synth+train+eval runs ") +
                  (!runs_ok ? "FAILED TO RUN" : same ? "give identical reports" : "DIFFER"));

  Outcome o;
  o.pass = pass;
  for (std::size_t i = 0; i < notes.size(); ++i) o.detail += (i ? "; " : "") + notes[i];
  return o;
}

bool selected(const Settings& s, const std::string& id) {
  return s.only.empty() || std::find(s.only.begin(), s.only.end(), id) != s.only.end();
}

int run(int argc, char** argv) {
  Settings s;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      s.only = detail::split_commas(argv[++i]);
    } else if (a == "--a5-steps" && i + 1 < argc) {
      s.a5_steps = std::stoi(argv[++i]);
    } else if (a == "--threads" && i + 1 < argc) {
      s.threads = std::stoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--only A1,A2,...] [--a5-steps N] [--threads N]\n";
      return kExitUsage;
    }
  }

  int failures = 0;
  const auto report = [&](const std::string& id, const std::string& name, const std::function<Outcome()>& f) {
    if (!selected(s, id)) return;
    std::cerr << id << " running" << std::endl;
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += o.pass ? 0 : 1;
    std::cout << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  };

  report("A1", "geometry conservation", geometry_conservation);
  report("A2", "soft-clip values", soft_clip_values);
  report("A3", "differentiability", differentiability);
  report("A4", "overfit", [&] { return overfit(s); });
  std::optional<TrainedPair> pair;
  const auto need_pair = [&] {
    if (!pair) pair = train_pair(s);
    return *pair;
  };
  report("A5", "generalization", [&] { return generalization(need_pair(), s); });
  report("A6", "oracle inversion", [&] { return oracle_inversion(s); });
  report("A7", "adversarial effect", [&] { return adversarial_effect(need_pair()); });
  report("A8", "formats and determinism", format_determinism);
  return failures == 0 ? kExitOk : kExitRuntime;
}

}  // namespace
}  // namespace ibrl

int main(int argc, char** argv) { return ibrl::run(argc, argv); }
