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

// Checkpoint files, little-endian:
//
//   "IBRL0001"
//   str kind                        "model" or "constant"
//   str config                      canonical key=value text
//   model:
//     u64 step, str rng_state
//     u32 n, n x tensor             parameters
//     u32 n, n x tensor             buffers (batch-norm running statistics)
//     2 x adam                      generator, discriminator
//     u32 r, r*r*3 f32              baseline mean log probe (r may be 0)
//   constant:
//     u32 r, r*r*3 f32              log probe
//
//   tensor = str name, u32 rank, rank x u32 dims, f32 values
//   adam   = u64 t, u32 n, n x (u32 size, m f32, v f32)
//
// Strings are u32 length + bytes.

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ibrl/config.hpp"
#include "ibrl/error.hpp"
#include "ibrl/io/binary.hpp"
#include "ibrl/lightnet.hpp"

namespace ibrl {

inline constexpr std::string_view kCheckpointMagic = "IBRL0001";

namespace detail {

inline void write_tensors(io::BinaryWriter& w, const std::vector<NamedTensor<float>>& ts) {
  w.u32(static_cast<std::uint32_t>(ts.size()));
  for (const auto& t : ts) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.tensor.rank()));
    for (int d : t.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.f32_array(t.tensor.value());
  }
}

// Reads into existing tensors, checking names and shapes.
inline void read_tensors(io::BinaryReader& r, const std::vector<NamedTensor<float>>& ts, const char* what) {
  const std::uint32_t n = r.u32();
  if (n != ts.size())
    throw ParseError(r.context() + ": " + what + " count " + std::to_string(n) + " does not match the model (" +
                     std::to_string(ts.size()) + ")");
  for (const auto& t : ts) {
    const std::string name = r.str(4096);
    if (name != t.name) throw ParseError(r.context() + ": expected tensor '" + t.name + "', found '" + name + "'");
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw ParseError(r.context() + ": tensor '" + name + "' has implausible rank");
    nn::Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    if (shape != t.tensor.shape())
      throw ParseError(r.context() + ": tensor '" + name + "' has shape " + nn::shape_string(shape) +
                       ", model expects " + nn::shape_string(t.tensor.shape()));
    auto dst = const_cast<nn::Tensor<float>&>(t.tensor).value();
    r.f32_array(dst);
  }
}

inline void write_adam(io::BinaryWriter& w, const nn::Adam<float>& opt) {
  w.u64(opt.steps());
  w.u32(static_cast<std::uint32_t>(opt.first_moments().size()));
  for (std::size_t k = 0; k < opt.first_moments().size(); ++k) {
    w.u32(static_cast<std::uint32_t>(opt.first_moments()[k].size()));
    w.f32_array(opt.first_moments()[k]);
    w.f32_array(opt.second_moments()[k]);
  }
}

inline void read_adam(io::BinaryReader& r, nn::Adam<float>& opt) {
  opt.set_steps(r.u64());
  const std::uint32_t n = r.u32();
  if (n != opt.first_moments().size()) throw ParseError(r.context() + ": optimizer state does not match the model");
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint32_t size = r.u32();
    if (size != opt.first_moments()[k].size())
      throw ParseError(r.context() + ": optimizer moment size does not match the model");
    r.f32_array(opt.first_moments()[k]);
    r.f32_array(opt.second_moments()[k]);
  }
}

inline void write_probe(io::BinaryWriter& w, const ImageD& probe) {
  w.u32(static_cast<std::uint32_t>(probe.width()));
  std::vector<float> v(probe.values().begin(), probe.values().end());
  w.f32_array(v);
}

inline ImageD read_probe(io::BinaryReader& r) {
  const std::uint32_t res = r.u32();
  if (res > 4096) throw ParseError(r.context() + ": implausible probe resolution");
  if (res == 0) return {};
  std::vector<float> v(static_cast<std::size_t>(res) * res * 3);
  r.f32_array(v);
  ImageD out(static_cast<int>(res), static_cast<int>(res), 3);
  for (std::size_t i = 0; i < v.size(); ++i) out.values()[i] = v[i];
  return out;
}

inline void expect_checkpoint_magic(io::BinaryReader& r) {
  std::string got(kCheckpointMagic.size(), '\0');
  r.bytes(got.data(), got.size());
  if (got == kCheckpointMagic) return;
  if (got.rfind("IBRL", 0) == 0) throw VersionError(r.context() + ": unsupported checkpoint version '" + got + "'");
  throw ParseError(r.context() + ": not a checkpoint file");
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, Trainer& trainer, const RunConfig& config) {
  io::BinaryWriter w(os);
  w.magic(kCheckpointMagic);
  w.str("model");
  w.str(canonical_config(config));
  w.u64(trainer.step_count());
  w.str(trainer.rng().state());
  std::vector<NamedTensor<float>> params = trainer.generator().store().params();
  std::vector<NamedTensor<float>> buffers = trainer.generator().store().buffers();
  for (const auto& p : trainer.discriminator().store().params()) params.push_back(p);
  for (const auto& b : trainer.discriminator().store().buffers()) buffers.push_back(b);
  detail::write_tensors(w, params);
  detail::write_tensors(w, buffers);
  detail::write_adam(w, trainer.optimizer_g());
  detail::write_adam(w, trainer.optimizer_d());
  detail::write_probe(w, trainer.baseline());
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

// A checkpoint whose predictor always returns one fixed log probe.
inline void write_constant_checkpoint(std::ostream& os, const ImageD& log_probe, const RunConfig& config) {
  io::BinaryWriter w(os);
  w.magic(kCheckpointMagic);
  w.str("constant");
  w.str(canonical_config(config));
  detail::write_probe(w, log_probe);
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

// Predicts log probes from backgrounds: either the generator in inference mode
// or a fixed probe.
class LightingModel {
 public:
  static LightingModel constant(ImageD log_probe, RunConfig config = {}) {
    LightingModel m;
    m.config_ = std::move(config);
    m.constant_ = std::move(log_probe);
    return m;
  }
  static LightingModel from_trainer(std::shared_ptr<Trainer> trainer, RunConfig config) {
    LightingModel m;
    m.config_ = std::move(config);
    m.trainer_ = std::move(trainer);
    return m;
  }

  bool is_constant() const { return !trainer_; }
  const RunConfig& config() const { return config_; }
  const std::shared_ptr<Trainer>& trainer() const { return trainer_; }

  Probe predict(const ImageF& background) const {
    if (trainer_) return trainer_->infer(background);
    return Probe{constant_, ProbeSpace::kLog};
  }

  // Mean log probe of the training set, when the checkpoint carries one.
  const ImageD& baseline() const {
    static const ImageD empty;
    return trainer_ ? trainer_->baseline() : empty;
  }

 private:
  RunConfig config_;
  std::shared_ptr<Trainer> trainer_;
  ImageD constant_;
};

inline LightingModel read_checkpoint(std::istream& is, const FieldSet& fields, const std::string& context = "checkpoint") {
  io::BinaryReader r(is, context);
  detail::expect_checkpoint_magic(r);
  const std::string kind = r.str(64);
  const RunConfig config = parse_config(r.str());
  if (kind == "constant") {
    ImageD probe = detail::read_probe(r);
    if (probe.empty()) throw ParseError(context + ": constant checkpoint has no probe");
    return LightingModel::constant(std::move(probe), config);
  }
  if (kind != "model") throw ParseError(context + ": unknown checkpoint kind '" + kind + "'");
  auto trainer = std::make_shared<Trainer>(config.model, fields);
  trainer->set_step_count(r.u64());
  trainer->rng().set_state(r.str(1u << 16));
  std::vector<NamedTensor<float>> params = trainer->generator().store().params();
  std::vector<NamedTensor<float>> buffers = trainer->generator().store().buffers();
  for (const auto& p : trainer->discriminator().store().params()) params.push_back(p);
  for (const auto& b : trainer->discriminator().store().buffers()) buffers.push_back(b);
  detail::read_tensors(r, params, "parameter");
  detail::read_tensors(r, buffers, "buffer");
  detail::read_adam(r, trainer->optimizer_g());
  detail::read_adam(r, trainer->optimizer_d());
  trainer->baseline() = detail::read_probe(r);
  return LightingModel::from_trainer(std::move(trainer), config);
}

inline void save_checkpoint(const std::filesystem::path& path, Trainer& trainer, const RunConfig& config) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(os, trainer, config);
}

inline void save_constant_checkpoint(const std::filesystem::path& path, const ImageD& log_probe,
                                     const RunConfig& config) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_constant_checkpoint(os, log_probe, config);
}

inline LightingModel load_checkpoint(const std::filesystem::path& path, const FieldSet& fields) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_checkpoint(is, fields, path.string());
}

}  // namespace ibrl
