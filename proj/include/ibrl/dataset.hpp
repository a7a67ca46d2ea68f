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

// On-disk synthetic datasets. Layout:
//
//   <root>/manifest.txt        "ibrl-manifest 1", config_hash=..., count=..., then one dir per line
//   <root>/ex_000000/background.ppm
//                    mirror.pfm, diffuse.pfm, matte_silver.pfm   LDR sphere crops
//                    env.pfm                                      linear probe before exposure
//                    meta.txt                                     seed, exposure, spec_hash

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ibrl/config.hpp"
#include "ibrl/error.hpp"
#include "ibrl/io/pfm.hpp"
#include "ibrl/io/ppm.hpp"
#include "ibrl/parallel.hpp"
#include "ibrl/scene_synth.hpp"

namespace ibrl {

namespace fs = std::filesystem;

inline constexpr const char* kManifestMagic = "ibrl-manifest";
inline constexpr int kManifestVersion = 1;
inline constexpr const char* kMetaMagic = "ibrl-meta";
inline constexpr int kMetaVersion = 1;

inline const char* sphere_file(Brdf b) {
  switch (b) {
    case Brdf::kMirror: return "mirror.pfm";
    case Brdf::kDiffuse: return "diffuse.pfm";
    case Brdf::kMatteSilver: return "matte_silver.pfm";
  }
  return "?";
}

struct Manifest {
  fs::path root;
  std::string config_hash;
  std::vector<std::string> entries;

  fs::path example_dir(std::size_t i) const { return root / entries.at(i); }
};

inline std::string example_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ex_%06zu", index);
  return buf;
}

inline std::uint64_t example_seed(std::uint64_t global_seed, std::size_t index) {
  return derive_seed(global_seed, static_cast<std::uint64_t>(index));
}

// In-memory generation; example i depends only on (global_seed, i).
inline std::vector<TrainingExample> generate_examples(std::size_t n, std::uint64_t global_seed, const SynthSpec& spec,
                                                      const FieldSet& fields, int threads = 1) {
  std::vector<TrainingExample> out(n);
  parallel_for(n, threads, [&](std::size_t i) { out[i] = make_example(example_seed(global_seed, i), spec, fields); });
  return out;
}

inline void write_example(const fs::path& dir, const TrainingExample& ex, const std::string& spec_hash) {
  fs::create_directories(dir);
  ImageF unit = ex.background;
  for (float& v : unit.values()) v += 0.5f;
  io::save_ppm(dir / "background.ppm", io::to_bytes(unit));
  for (Brdf b : kAllBrdfs) io::save_pfm(dir / sphere_file(b), ex.spheres[static_cast<int>(b)].rgb);
  io::save_pfm(dir / "env.pfm", image_cast<float>(ex.env.values));
  std::ofstream meta(dir / "meta.txt", std::ios::binary);
  char exposure[64];
  std::snprintf(exposure, sizeof exposure, "%.17g", ex.exposure);
  meta << kMetaMagic << ' ' << kMetaVersion << '\n'
       << "seed=" << ex.seed << '\n'
       << "exposure=" << exposure << '\n'
       << "spec_hash=" << spec_hash << '\n';
  if (!meta) throw std::runtime_error("cannot write " + (dir / "meta.txt").string());
}

inline TrainingExample load_example(const fs::path& dir) {
  TrainingExample ex;
  const io::Image8 bytes = io::load_ppm(dir / "background.ppm");
  if (bytes.width() != kBackgroundWidth || bytes.height() != kBackgroundHeight || bytes.channels() != 3)
    throw ParseError(dir.string() + ": background must be 135x192 RGB");
  ex.background = ImageF(bytes.width(), bytes.height(), 3);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    ex.background.values()[i] = static_cast<float>(bytes.values()[i]) / 255.0f - 0.5f;
  for (Brdf b : kAllBrdfs) {
    ImageF rgb = io::load_pfm(dir / sphere_file(b));
    if (rgb.width() != rgb.height() || rgb.channels() != 3)
      throw ParseError((dir / sphere_file(b)).string() + ": sphere crop must be square RGB");
    SphereImage s = SphereImage::blank(rgb.width());
    s.rgb = std::move(rgb);
    ex.spheres[static_cast<int>(b)] = std::move(s);
  }
  const ImageF env = io::load_pfm(dir / "env.pfm");
  if (env.width() != env.height() || env.channels() != 3) throw ParseError(dir.string() + ": env probe must be square RGB");
  ex.env.values = image_cast<double>(env);
  ex.env.space = ProbeSpace::kLinear;

  std::ifstream meta(dir / "meta.txt", std::ios::binary);
  if (!meta) throw std::runtime_error("cannot open " + (dir / "meta.txt").string());
  std::string magic;
  int version = 0;
  meta >> magic >> version;
  if (magic != kMetaMagic) throw ParseError((dir / "meta.txt").string() + ": not an example metadata file");
  if (version != kMetaVersion)
    throw VersionError((dir / "meta.txt").string() + ": unsupported metadata version " + std::to_string(version));
  std::string line;
  bool have_seed = false, have_exposure = false;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "seed") {
      ex.seed = std::stoull(value);
      have_seed = true;
    } else if (key == "exposure") {
      ex.exposure = std::strtod(value.c_str(), nullptr);
      have_exposure = true;
    }
  }
  if (!have_seed || !have_exposure) throw ParseError((dir / "meta.txt").string() + ": missing seed or exposure");
  return ex;
}

inline void write_manifest(const Manifest& m) {
  std::ofstream os(m.root / "manifest.txt", std::ios::binary);
  os << kManifestMagic << ' ' << kManifestVersion << '\n'
     << "config_hash=" << m.config_hash << '\n'
     << "count=" << m.entries.size() << '\n';
  for (const auto& e : m.entries) os << e << '\n';
  if (!os) throw std::runtime_error("cannot write " + (m.root / "manifest.txt").string());
}

// Accepts the dataset directory or the manifest file itself.
inline Manifest read_manifest(const fs::path& path) {
  Manifest m;
  const fs::path file = fs::is_directory(path) ? path / "manifest.txt" : path;
  m.root = file.parent_path();
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != kManifestMagic) throw ParseError(file.string() + ": not a dataset manifest");
  if (version != kManifestVersion)
    throw VersionError(file.string() + ": unsupported manifest version " + std::to_string(version));
  std::string line;
  std::getline(is, line);
  long long count = -1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("config_hash=", 0) == 0) m.config_hash = line.substr(12);
    else if (line.rfind("count=", 0) == 0) count = std::stoll(line.substr(6));
    else m.entries.push_back(line);
  }
  if (count != static_cast<long long>(m.entries.size()))
    throw ParseError(file.string() + ": entry count does not match count=");
  return m;
}

// Writes n examples under `root`. Example i depends only on (global_seed, i),
// so the files are identical for any thread count.
inline Manifest make_dataset(std::size_t n, std::uint64_t global_seed, const fs::path& root, const SynthSpec& spec,
                             const FieldSet& fields, const std::string& config_hash, int threads = 1) {
  fs::create_directories(root);
  Manifest m;
  m.root = root;
  m.config_hash = config_hash;
  const std::string spec_hash = synth_hash(spec);
  for (std::size_t i = 0; i < n; ++i) m.entries.push_back(example_name(i));
  parallel_for(n, threads, [&](std::size_t i) {
    write_example(root / m.entries[i], make_example(example_seed(global_seed, i), spec, fields), spec_hash);
  });
  write_manifest(m);
  return m;
}

inline std::vector<TrainingExample> load_dataset(const Manifest& m, int threads = 1) {
  std::vector<TrainingExample> out(m.entries.size());
  parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = load_example(m.example_dir(i)); });
  return out;
}

}  // namespace ibrl
