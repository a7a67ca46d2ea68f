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

// Binary PPM (P6) with maxval 255.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "ibrl/error.hpp"
#include "ibrl/image.hpp"

namespace ibrl::io {

using Image8 = Image<std::uint8_t>;

inline void write_ppm(std::ostream& os, const Image8& img) {
  require(img.channels() == 3, "write_ppm: image must be RGB");
  os << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.values().data()), static_cast<std::streamsize>(img.size()));
}

namespace detail {

// Next header token, skipping whitespace and '#' comments.
inline std::string ppm_token(std::istream& is, const std::string& context) {
  std::string tok;
  int c;
  while ((c = is.peek()) != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  while ((c = is.peek()) != EOF && !std::isspace(c) && c != '#') tok.push_back(static_cast<char>(is.get()));
  if (tok.empty()) throw ParseError(context + ": truncated header");
  return tok;
}

inline int ppm_int(std::istream& is, const std::string& context) {
  const std::string tok = ppm_token(is, context);
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (*end != '\0' || v <= 0 || v > (1 << 20)) throw ParseError(context + ": bad header value '" + tok + "'");
  return static_cast<int>(v);
}

}  // namespace detail

inline Image8 read_ppm(std::istream& is, const std::string& context = "PPM") {
  if (detail::ppm_token(is, context) != "P6") throw ParseError(context + ": bad magic, expected P6");
  const int w = detail::ppm_int(is, context);
  const int h = detail::ppm_int(is, context);
  const int maxval = detail::ppm_int(is, context);
  if (maxval != 255) throw ParseError(context + ": only maxval 255 is supported");
  if (!std::isspace(is.get())) throw ParseError(context + ": malformed header terminator");
  Image8 img(w, h, 3);
  is.read(reinterpret_cast<char*>(img.values().data()), static_cast<std::streamsize>(img.size()));
  if (static_cast<std::size_t>(is.gcount()) != img.size())
    throw ParseError(context + ": pixel data shorter than the header dimensions");
  if (is.peek() != EOF) throw ParseError(context + ": pixel data longer than the header dimensions");
  return img;
}

inline void save_ppm(const std::filesystem::path& path, const Image8& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_ppm(os, img);
}

inline Image8 load_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_ppm(is, path.string());
}

// [0, 1] floats to bytes with rounding; out-of-range values clamp.
inline std::uint8_t quantize8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

template <class T>
Image8 to_bytes(const Image<T>& img) {
  Image8 out(img.width(), img.height(), img.channels());
  for (std::size_t i = 0; i < img.size(); ++i) out.values()[i] = quantize8(img.values()[i]);
  return out;
}

inline ImageF to_unit_float(const Image8& img) {
  ImageF out(img.width(), img.height(), img.channels());
  for (std::size_t i = 0; i < img.size(); ++i) out.values()[i] = static_cast<float>(img.values()[i]) / 255.0f;
  return out;
}

}  // namespace ibrl::io
