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

// Line-oriented key=value run configuration. Every key has a default; unknown
// keys are rejected. The canonical text (all keys, fixed order) is hashed and
// embedded in every artifact a run writes.

#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ibrl/error.hpp"
#include "ibrl/lightnet.hpp"
#include "ibrl/rng.hpp"
#include "ibrl/scene_synth.hpp"

namespace ibrl {

struct RunConfig {
  ModelConfig model;
  SynthSpec synth;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw UsageError("config: " + key + " expects a number, got '" + v + "'");
  }
  if (used != v.size()) throw UsageError("config: " + key + " expects a number, got '" + v + "'");
  return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  if (d != static_cast<double>(static_cast<long long>(d)))
    throw UsageError("config: " + key + " expects an integer, got '" + v + "'");
  return static_cast<long long>(d);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config: " + key + " expects true or false, got '" + v + "'");
}

inline std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct ConfigKey {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline ConfigKey double_key(std::string name, std::function<double&(RunConfig&)> field) {
  return {name, [field](const RunConfig& c) { return format_double(field(const_cast<RunConfig&>(c))); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = parse_double(name, v); }};
}

inline ConfigKey int_key(std::string name, std::function<int&(RunConfig&)> field) {
  return {name, [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = static_cast<int>(parse_int(name, v)); }};
}

inline ConfigKey bool_key(std::string name, std::function<bool&(RunConfig&)> field) {
  return {name, [field](const RunConfig& c) { return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [field, name](RunConfig& c, const std::string& v) { field(c) = parse_bool(name, v); }};
}

inline ConfigKey list_key(std::string name, std::function<std::vector<int>&(RunConfig&)> field) {
  return {name,
          [field](const RunConfig& c) {
            std::string s;
            for (int v : field(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ",") + std::to_string(v);
            return s;
          },
          [field, name](RunConfig& c, const std::string& v) {
            std::vector<int> out;
            for (const auto& item : split_commas(v)) out.push_back(static_cast<int>(parse_int(name, item)));
            field(c) = out;
          }};
}

inline ConfigKey range_key(std::string name, std::function<Range&(RunConfig&)> field) {
  return {name,
          [field](const RunConfig& c) {
            const Range& r = field(const_cast<RunConfig&>(c));
            return format_double(r.lo) + "," + format_double(r.hi);
          },
          [field, name](RunConfig& c, const std::string& v) {
            const auto items = split_commas(v);
            if (items.size() != 2) throw UsageError("config: " + name + " expects lo,hi");
            field(c) = Range{parse_double(name, items[0]), parse_double(name, items[1])};
          }};
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(list_key("generator.encoder_channels", [](RunConfig& c) -> auto& { return c.model.generator.encoder_channels; }));
    k.push_back(int_key("generator.latent_size", [](RunConfig& c) -> auto& { return c.model.generator.latent_size; }));
    k.push_back(list_key("generator.decoder_channels", [](RunConfig& c) -> auto& { return c.model.generator.decoder_channels; }));
    k.push_back(int_key("generator.probe_resolution", [](RunConfig& c) -> auto& { return c.model.generator.probe_resolution; }));
    k.push_back(bool_key("generator.batch_norm", [](RunConfig& c) -> auto& { return c.model.generator.batch_norm; }));
    k.push_back(list_key("discriminator.channels", [](RunConfig& c) -> auto& { return c.model.discriminator.channels; }));
    k.push_back(int_key("discriminator.resolution", [](RunConfig& c) -> auto& { return c.model.discriminator.resolution; }));
    k.push_back(bool_key("discriminator.batch_norm", [](RunConfig& c) -> auto& { return c.model.discriminator.batch_norm; }));
    k.push_back(double_key("train.lr_g", [](RunConfig& c) -> auto& { return c.model.train.lr_g; }));
    k.push_back(double_key("train.lr_d_ratio", [](RunConfig& c) -> auto& { return c.model.train.lr_d_ratio; }));
    k.push_back(double_key("train.lambda_rec", [](RunConfig& c) -> auto& { return c.model.train.lambda_rec; }));
    k.push_back(double_key("train.weight_mirror", [](RunConfig& c) -> auto& { return c.model.train.weights.values[0]; }));
    k.push_back(double_key("train.weight_diffuse", [](RunConfig& c) -> auto& { return c.model.train.weights.values[1]; }));
    k.push_back(double_key("train.weight_matte_silver", [](RunConfig& c) -> auto& { return c.model.train.weights.values[2]; }));
    k.push_back(int_key("train.batch_size", [](RunConfig& c) -> auto& { return c.model.train.batch_size; }));
    k.push_back(int_key("train.steps", [](RunConfig& c) -> auto& { return c.model.train.steps; }));
    k.push_back({"train.seed", [](const RunConfig& c) { return std::to_string(c.model.train.seed); },
                 [](RunConfig& c, const std::string& v) {
                   c.model.train.seed = static_cast<std::uint64_t>(parse_int("train.seed", v));
                 }});
    k.push_back(bool_key("train.gan_enabled", [](RunConfig& c) -> auto& { return c.model.train.gan_enabled; }));
    k.push_back(bool_key("train.flip_augment", [](RunConfig& c) -> auto& { return c.model.train.flip_augment; }));
    k.push_back(bool_key("train.non_saturating", [](RunConfig& c) -> auto& { return c.model.train.non_saturating; }));
    k.push_back(int_key("train.checkpoint_every", [](RunConfig& c) -> auto& { return c.model.train.checkpoint_every; }));
    k.push_back(range_key("env.ambient", [](RunConfig& c) -> auto& { return c.synth.environment.ambient; }));
    k.push_back(double_key("env.sky_gradient", [](RunConfig& c) -> auto& { return c.synth.environment.sky_gradient; }));
    k.push_back(range_key("env.light_count", [](RunConfig& c) -> auto& { return c.synth.environment.light_count; }));
    k.push_back(range_key("env.light_elevation_deg", [](RunConfig& c) -> auto& { return c.synth.environment.light_elevation_deg; }));
    k.push_back(range_key("env.light_radius_deg", [](RunConfig& c) -> auto& { return c.synth.environment.light_radius_deg; }));
    k.push_back(range_key("env.light_ratio", [](RunConfig& c) -> auto& { return c.synth.environment.light_ratio; }));
    k.push_back(range_key("env.color_temperature_k", [](RunConfig& c) -> auto& { return c.synth.environment.color_temperature_k; }));
    k.push_back(range_key("scene.camera_pitch_deg", [](RunConfig& c) -> auto& { return c.synth.scene.camera_pitch_deg; }));
    k.push_back(double_key("scene.vertical_fov_deg", [](RunConfig& c) -> auto& { return c.synth.scene.vertical_fov_deg; }));
    k.push_back(double_key("scene.camera_height", [](RunConfig& c) -> auto& { return c.synth.scene.camera_height; }));
    k.push_back(range_key("scene.primitive_count", [](RunConfig& c) -> auto& { return c.synth.scene.primitive_count; }));
    k.push_back(range_key("scene.primitive_radius", [](RunConfig& c) -> auto& { return c.synth.scene.primitive_radius; }));
    k.push_back(range_key("scene.primitive_distance", [](RunConfig& c) -> auto& { return c.synth.scene.primitive_distance; }));
    k.push_back(range_key("scene.albedo", [](RunConfig& c) -> auto& { return c.synth.scene.albedo; }));
    k.push_back(range_key("scene.ground_tint", [](RunConfig& c) -> auto& { return c.synth.scene.ground_tint; }));
    k.push_back(range_key("scene.primitive_tint", [](RunConfig& c) -> auto& { return c.synth.scene.primitive_tint; }));
    k.push_back(double_key("scene.phong_fraction", [](RunConfig& c) -> auto& { return c.synth.scene.phong_fraction; }));
    k.push_back(range_key("scene.phong_reflectivity", [](RunConfig& c) -> auto& { return c.synth.scene.phong_reflectivity; }));
    return k;
  }();
  return keys;
}

}  // namespace detail

// Applies key=value lines on top of `base`. Blank lines and '#' comments are
// ignored.
inline RunConfig parse_config(const std::string& text, RunConfig base = {}) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& k : detail::config_keys()) {
      if (k.name != key) continue;
      k.set(base, value);
      found = true;
      break;
    }
    if (!found) throw UsageError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  base.model.generator.validate();
  base.model.discriminator.validate();
  base.model.train.validate();
  return base;
}

// Every key in fixed order.
inline std::string canonical_config(const RunConfig& config) {
  std::string out;
  for (const auto& k : detail::config_keys()) out += k.name + "=" + k.get(config) + "\n";
  return out;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const RunConfig& config) { return hash_hex(fnv1a(canonical_config(config))); }

// Hash of only the synthesis keys, written into dataset metadata.
inline std::string synth_hash(const SynthSpec& spec) {
  RunConfig c;
  c.synth = spec;
  std::string text;
  for (const auto& k : detail::config_keys())
    if (k.name.rfind("env.", 0) == 0 || k.name.rfind("scene.", 0) == 0) text += k.name + "=" + k.get(c) + "\n";
  return hash_hex(fnv1a(text));
}

}  // namespace ibrl
