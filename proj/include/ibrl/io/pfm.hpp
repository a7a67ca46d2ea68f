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

// Portable float map. Header "PF" (RGB) or "Pf" (gray), then "<w> <h>", then
// the scale; this library always writes -1.0 (little-endian) and rejects
// big-endian files. Rows are stored bottom to top.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ibrl/error.hpp"
#include "ibrl/image.hpp"
#include "ibrl/io/binary.hpp"

namespace ibrl::io {

inline void write_pfm(std::ostream& os, const ImageF& img) {
  require(img.channels() == 3 || img.channels() == 1, "write_pfm: image must have 1 or 3 channels");
  os << (img.channels() == 3 ? "PF" : "Pf") << '\n'
     << img.width() << ' ' << img.height() << '\n'
     << "-1.0\n";
  BinaryWriter w(os);
  const std::size_t row = static_cast<std::size_t>(img.width()) * img.channels();
  for (int y = img.height() - 1; y >= 0; --y)
    w.f32_array(img.values().subspan(static_cast<std::size_t>(y) * row, row));
}

namespace detail {

inline std::string header_token(std::istream& is, const std::string& context) {
  std::string tok;
  if (!(is >> tok)) throw ParseError(context + ": truncated header");
  return tok;
}

inline int header_int(std::istream& is, const std::string& context) {
  const std::string tok = header_token(is, context);
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (*end != '\0' || v <= 0 || v > (1 << 20)) throw ParseError(context + ": bad dimension '" + tok + "'");
  return static_cast<int>(v);
}

}  // namespace detail

inline ImageF read_pfm(std::istream& is, const std::string& context = "PFM") {
  const std::string magic = detail::header_token(is, context);
  int channels = 0;
  if (magic == "PF") channels = 3;
  else if (magic == "Pf") channels = 1;
  else throw ParseError(context + ": bad magic, expected PF or Pf");
  const int w = detail::header_int(is, context);
  const int h = detail::header_int(is, context);
  const std::string scale_tok = detail::header_token(is, context);
  char* end = nullptr;
  const double scale = std::strtod(scale_tok.c_str(), &end);
  if (*end != '\0' || scale == 0.0 || !std::isfinite(scale))
    throw ParseError(context + ": bad scale '" + scale_tok + "'");
  if (scale > 0.0) throw ParseError(context + ": big-endian PFM is not supported");
  if (is.get() != '\n') throw ParseError(context + ": malformed header terminator");
  ImageF img(w, h, channels);
  BinaryReader r(is, context);
  const std::size_t row = static_cast<std::size_t>(w) * channels;
  for (int y = h - 1; y >= 0; --y) r.f32_array(img.values().subspan(static_cast<std::size_t>(y) * row, row));
  return img;
}

inline void save_pfm(const std::filesystem::path& path, const ImageF& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_pfm(os, img);
}

inline ImageF load_pfm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_pfm(is, path.string());
}

}  // namespace ibrl::io
