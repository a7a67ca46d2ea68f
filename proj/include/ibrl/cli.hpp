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

// Command-line front end. Exit codes: 0 success, 1 runtime failure, 2 usage.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ibrl/checkpoint.hpp"
#include "ibrl/config.hpp"
#include "ibrl/dataset.hpp"
#include "ibrl/error.hpp"
#include "ibrl/io/pfm.hpp"
#include "ibrl/io/ppm.hpp"
#include "ibrl/lightnet.hpp"
#include "ibrl/metrics.hpp"
#include "ibrl/probe_geometry.hpp"
#include "ibrl/reflectance_basis.hpp"
#include "ibrl/relight.hpp"
#include "ibrl/scene_synth.hpp"

namespace ibrl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace cli {

namespace fs = std::filesystem;

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

inline RunConfig load_config(const std::string& path) {
  return path.empty() ? RunConfig{} : parse_config(read_text(path));
}

inline FieldSet fields_for(const RunConfig& config) {
  const ProbeLayout layout = build_layout(config.model.generator.probe_resolution);
  return default_fields(layout, config.model.discriminator.resolution);
}

// Evaluation over a list of examples. Rows: the model, then the stored
// baseline (if any), then oracle probes ln(s * env) on request.
inline Report evaluate(const std::vector<TrainingExample>& examples, const LightingModel& model, const FieldSet& fields,
                       bool include_baseline, bool include_oracle, int threads) {
  if (examples.empty()) throw UsageError("evaluate: the dataset is empty");
  Report report;
  report.config_hash = config_hash(model.config());
  std::vector<Probe> predictions;
  predictions.reserve(examples.size());
  for (const auto& ex : examples) predictions.push_back(model.predict(ex.background));
  report.rows.push_back(summarize(
      "model", score_examples(examples, fields, [&](std::size_t i) { return predictions[i]; }, threads)));
  if (include_baseline && !model.baseline().empty()) {
    const Probe base{model.baseline(), ProbeSpace::kLog};
    report.rows.push_back(
        summarize("baseline", score_examples(examples, fields, [&](std::size_t) { return base; }, threads)));
  }
  if (include_oracle) {
    const ProbeLayout& layout = fields.fields[0].layout();
    report.rows.push_back(summarize(
        "oracle",
        score_examples(examples, fields, [&](std::size_t i) { return oracle_log_probe(examples[i], layout); },
                       threads)));
  }
  return report;
}

struct Options {
  std::string config;
  int threads = 1;
  std::uint64_t seed = 1;
  bool seed_set = false;
  // basis
  int probe_res = 32, sphere_res = 32;
  std::string out;
  // synth
  std::size_t count = 0;
  // train
  std::string data, resume;
  int steps = -1;
  int log_every = 100;
  // infer / eval / render
  std::string checkpoint, image, example, probe, spheres_dir;
  bool linear = false, oracle = false, no_baseline = false;
  // probe-convert
  std::string input, to_checkpoint;
  // crop
  std::vector<double> sphere;  // cx, cy, radius, focal
};

inline int run_basis(const Options& o, std::ostream& out) {
  const ProbeLayout layout = build_layout(o.probe_res);
  const FieldSet fields = default_fields(layout, o.sphere_res);
  fs::create_directories(o.out);
  for (Brdf b : kAllBrdfs) {
    const fs::path path = fs::path(o.out) / (std::string(brdf_name(b)) + ".rfld");
    save_field(path, fields[b]);
    out << "wrote " << path.string() << "\n";
  }
  return kExitOk;
}

inline int run_synth(const Options& o, const RunConfig& config, std::ostream& out) {
  const FieldSet fields = fields_for(config);
  const Manifest m = make_dataset(o.count, o.seed, o.out, config.synth, fields, config_hash(config), o.threads);
  out << "wrote " << m.entries.size() << " examples to " << o.out << " (config_hash=" << m.config_hash << ")\n";
  return kExitOk;
}

inline int run_train(const Options& o, RunConfig config, std::ostream& out) {
  if (o.seed_set) config.model.train.seed = o.seed;
  if (o.steps >= 0) config.model.train.steps = o.steps;
  const FieldSet fields = fields_for(config);
  const auto examples = load_dataset(read_manifest(o.data), o.threads);
  const TrainingSet set = TrainingSet::from_examples(examples, fields.fields[0].layout());
  std::shared_ptr<Trainer> trainer;
  if (!o.resume.empty()) {
    LightingModel m = load_checkpoint(o.resume, fields);
    if (m.is_constant()) throw UsageError("train: cannot resume from a constant-probe checkpoint");
    config.model = m.config().model;
    if (o.steps >= 0) config.model.train.steps = o.steps;
    trainer = m.trainer();
  } else {
    trainer = std::make_shared<Trainer>(config.model, fields);
    trainer->baseline() = set.mean_log_probe;
  }
  const auto total = static_cast<std::uint64_t>(config.model.train.steps);
  const int every = config.model.train.checkpoint_every;
  out << "config_hash=" << config_hash(config) << " examples=" << set.size() << "\n";
  while (trainer->step_count() < total) {
    const StepLog log = trainer->step(set);
    if (o.log_every > 0 && (log.step % o.log_every == 0 || log.step == total)) {
      out << "step=" << log.step << " rec=" << format_number(log.rec_loss)
          << " mirror=" << format_number(log.per_brdf[0]) << " diffuse=" << format_number(log.per_brdf[1])
          << " matte_silver=" << format_number(log.per_brdf[2]);
      if (config.model.train.gan_enabled)
        out << " adv=" << format_number(log.adv) << " d_real=" << format_number(log.d_real)
            << " d_fake=" << format_number(log.d_fake);
      out << "\n";
    }
    if (every > 0 && log.step % static_cast<std::uint64_t>(every) == 0 && log.step != total)
      save_checkpoint(o.out, *trainer, config);
  }
  save_checkpoint(o.out, *trainer, config);
  out << "wrote " << o.out << "\n";
  return kExitOk;
}

// A 135x192 PPM is used as-is; other 9:16 frames go through crop_background.
inline ImageF load_background(const fs::path& path) {
  const io::Image8 img = io::load_ppm(path);
  if (img.width() == kBackgroundWidth && img.height() == kBackgroundHeight) {
    ImageF out(img.width(), img.height(), 3);
    for (std::size_t i = 0; i < img.size(); ++i) out.values()[i] = static_cast<float>(img.values()[i]) / 255.0f - 0.5f;
    return out;
  }
  return crop_background(io::to_unit_float(img));
}

inline void write_spheres(const fs::path& dir, const FieldSet& fields, const Probe& log_probe) {
  fs::create_directories(dir);
  const auto spheres = render_spheres(fields, log_probe);
  for (Brdf b : kAllBrdfs) {
    const ImageF img = image_cast<float>(spheres[static_cast<int>(b)]);
    io::save_pfm(dir / (std::string(brdf_name(b)) + ".pfm"), img);
    io::save_ppm(dir / (std::string(brdf_name(b)) + ".ppm"), io::to_bytes(img));
  }
}

inline int run_infer(const Options& o, std::ostream& out) {
  if (o.image.empty() == o.example.empty()) throw UsageError("infer: give exactly one of --image or --example");
  const ProbeLayout layout = build_layout(32);
  const FieldSet fields = default_fields(layout, 32);
  const LightingModel model = load_checkpoint(o.checkpoint, fields);
  const ImageF background = o.image.empty() ? load_example(o.example).background : load_background(o.image);
  const Probe q = model.predict(background);
  io::save_pfm(o.out, image_cast<float>(q.values));
  out << "wrote " << o.out << "\n";
  if (!o.spheres_dir.empty()) {
    write_spheres(o.spheres_dir, fields, q);
    out << "wrote spheres to " << o.spheres_dir << "\n";
  }
  return kExitOk;
}

inline int run_render(const Options& o, std::ostream& out) {
  const ImageF raw = io::load_pfm(o.probe);
  if (raw.width() != raw.height() || raw.channels() != 3) throw UsageError("render: probe must be square RGB");
  const ProbeLayout layout = build_layout(raw.width());
  const FieldSet fields = default_fields(layout, o.sphere_res);
  Probe p{image_cast<double>(raw), o.linear ? ProbeSpace::kLinear : ProbeSpace::kLog};
  const Probe q = o.linear ? to_log(p, layout) : p;
  write_spheres(o.out, fields, q);
  out << "wrote spheres to " << o.out << "\n";
  return kExitOk;
}

inline int run_eval(const Options& o, std::ostream& out) {
  const ProbeLayout layout = build_layout(32);
  const FieldSet fields = default_fields(layout, 32);
  const LightingModel model = load_checkpoint(o.checkpoint, fields);
  const auto examples = load_dataset(read_manifest(o.data), o.threads);
  const Report report = evaluate(examples, model, fields, !o.no_baseline, o.oracle, o.threads);
  const std::string kv = report_key_values(report);
  if (!o.out.empty()) write_text(o.out, kv);
  out << report_table(report);
  if (o.out.empty()) out << kv;
  return kExitOk;
}

// PFM probe <-> text list "x y z solid_angle r g b", one line per valid pixel
// in row-major pixel order, preceded by "# probe <resolution>".
inline int run_probe_convert(const Options& o, std::ostream& out) {
  const fs::path in(o.input);
  if (!o.to_checkpoint.empty()) {
    const ImageF raw = io::load_pfm(in);
    save_constant_checkpoint(o.to_checkpoint, image_cast<double>(raw), load_config(o.config));
    out << "wrote " << o.to_checkpoint << "\n";
    return kExitOk;
  }
  if (in.extension() == ".pfm") {
    const ImageF raw = io::load_pfm(in);
    if (raw.width() != raw.height() || raw.channels() != 3) throw UsageError("probe-convert: probe must be square RGB");
    const ProbeLayout layout = build_layout(raw.width());
    std::string text = "# probe " + std::to_string(layout.resolution) + "\n";
    char line[256];
    for (int p : layout.valid_pixels) {
      const Vec3& d = layout.directions[p];
      const int r = layout.resolution;
      std::snprintf(line, sizeof line, "%.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", d.x, d.y, d.z, layout.solid_angles[p],
                    raw(p % r, p / r, 0), raw(p % r, p / r, 1), raw(p % r, p / r, 2));
      text += line;
    }
    write_text(o.out, text);
  } else {
    std::istringstream is(read_text(in));
    std::string hash, word;
    int res = 0;
    is >> hash >> word >> res;
    if (hash != "#" || word != "probe" || res < 4) throw ParseError(in.string() + ": expected '# probe <resolution>'");
    const ProbeLayout layout = build_layout(res);
    ImageF probe(res, res, 3);
    for (int p : layout.valid_pixels) {
      double x, y, z, sa, r, g, b;
      if (!(is >> x >> y >> z >> sa >> r >> g >> b)) throw ParseError(in.string() + ": truncated direction list");
      const PixelCoord pc = direction_to_pixel(normalize(Vec3{x, y, z}), layout);
      const int u = std::clamp(static_cast<int>(std::lround(pc.u)), 0, res - 1);
      const int v = std::clamp(static_cast<int>(std::lround(pc.v)), 0, res - 1);
      if (v * res + u != p) throw ParseError(in.string() + ": direction list is not in pixel order");
      probe(u, v, 0) = static_cast<float>(r);
      probe(u, v, 1) = static_cast<float>(g);
      probe(u, v, 2) = static_cast<float>(b);
    }
    io::save_pfm(o.out, probe);
  }
  out << "wrote " << o.out << "\n";
  return kExitOk;
}

inline int run_crop(const Options& o, std::ostream& out) {
  const ImageF frame = io::to_unit_float(io::load_ppm(o.image));
  if (o.sphere.empty()) {
    ImageF bg = crop_background(frame);
    for (float& v : bg.values()) v += 0.5f;
    io::save_ppm(o.out, io::to_bytes(bg));
  } else {
    if (o.sphere.size() != 4) throw UsageError("crop: --sphere takes cx,cy,radius,focal");
    CircleDetection det;
    det.center_u = o.sphere[0];
    det.center_v = o.sphere[1];
    det.radius = o.sphere[2];
    det.intrinsics = Intrinsics{o.sphere[3], frame.width() / 2.0, frame.height() / 2.0};
    const SphereImage s = resample_sphere_crop(frame, det, o.sphere_res);
    for (const auto& w : s.warnings) out << "warning: " << w << "\n";
    io::save_pfm(o.out, s.rgb);
  }
  out << "wrote " << o.out << "\n";
  return kExitOk;
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  cli::Options o;
  CLI::App app{"HDR lighting estimation from LDR images"};
  app.require_subcommand(1);
  app.add_option("--threads", o.threads, "worker threads (1 = deterministic reference mode)")->check(CLI::PositiveNumber);
  app.add_option("--config", o.config, "key=value configuration file");

  auto* basis = app.add_subcommand("basis", "write the three reflectance fields");
  basis->add_option("--probe-res", o.probe_res, "probe resolution")->check(CLI::Range(4, 1024));
  basis->add_option("--sphere-res", o.sphere_res, "sphere crop resolution")->check(CLI::Range(8, 1024));
  basis->add_option("--out", o.out, "output directory")->required();

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--count", o.count, "number of examples")->required();
  synth->add_option("--out", o.out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train the lighting network");
  train->add_option("--data", o.data, "dataset directory or manifest")->required();
  train->add_option("--out", o.out, "checkpoint path")->required();
  train->add_option("--steps", o.steps, "total steps (overrides train.steps)");
  train->add_option("--resume", o.resume, "checkpoint to continue from");
  train->add_option("--log-every", o.log_every, "print losses every N steps (0 = never)");

  auto* infer = app.add_subcommand("infer", "predict a log-space probe from an image");
  infer->add_option("--checkpoint", o.checkpoint, "checkpoint")->required();
  infer->add_option("--image", o.image, "PPM background (135x192) or 9:16 frame");
  infer->add_option("--example", o.example, "dataset example directory");
  infer->add_option("--out", o.out, "output PFM probe")->required();
  infer->add_option("--spheres", o.spheres_dir, "also render the three spheres into this directory");

  auto* render = app.add_subcommand("render", "render spheres from a probe");
  render->add_option("--probe", o.probe, "PFM probe")->required();
  render->add_flag("--linear", o.linear, "probe holds linear radiance instead of log radiance");
  render->add_option("--sphere-res", o.sphere_res, "sphere resolution")->check(CLI::Range(8, 1024));
  render->add_option("--out", o.out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--data", o.data, "dataset directory or manifest")->required();
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint")->required();
  eval->add_option("--out", o.out, "key=value report path");
  eval->add_flag("--oracle", o.oracle, "add a row for the exact probes ln(s*env)");
  eval->add_flag("--no-baseline", o.no_baseline, "omit the constant mean-probe baseline row");

  auto* convert = app.add_subcommand("probe-convert", "convert between PFM probes and direction lists");
  convert->add_option("--in", o.input, "input .pfm or direction list")->required();
  convert->add_option("--out", o.out, "output path");
  convert->add_option("--to-checkpoint", o.to_checkpoint, "write a constant-probe checkpoint from a log-space PFM");

  auto* crop = app.add_subcommand("crop", "crop a frame to the network input or resample a sphere");
  crop->add_option("--image", o.image, "input PPM frame")->required();
  crop->add_option("--sphere", o.sphere, "cx,cy,radius,focal of a sphere to resample")->delimiter(',');
  crop->add_option("--sphere-res", o.sphere_res, "sphere crop resolution")->check(CLI::Range(8, 1024));
  crop->add_option("--out", o.out, "output path")->required();

  for (auto* sub : {synth, train}) {
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&o](const std::uint64_t& v) {
          o.seed = v;
          o.seed_set = true;
        },
        "random seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const RunConfig config = cli::load_config(o.config);
    if (*basis) return cli::run_basis(o, out);
    if (*synth) return cli::run_synth(o, config, out);
    if (*train) return cli::run_train(o, config, out);
    if (*infer) return cli::run_infer(o, out);
    if (*render) return cli::run_render(o, out);
    if (*eval) return cli::run_eval(o, out);
    if (*convert) {
      if (o.out.empty() == o.to_checkpoint.empty()) throw UsageError("probe-convert: give --out or --to-checkpoint");
      return cli::run_probe_convert(o, out);
    }
    if (*crop) return cli::run_crop(o, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ibrl
