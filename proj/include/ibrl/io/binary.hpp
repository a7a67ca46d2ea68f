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

// Little-endian primitive encoding shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ibrl/error.hpp"

namespace ibrl::io {

namespace detail {

template <class U>
U byteswap_if_big(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) out = (out << 8) | ((v >> (8 * i)) & 0xff);
    return out;
  }
  return v;
}

}  // namespace detail

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void bytes(const void* data, std::size_t n) {
    os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  void u32(std::uint32_t v) { put(detail::byteswap_if_big(v)); }
  void u64(std::uint64_t v) { put(detail::byteswap_if_big(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f32_array(std::span<const float> v) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(v.data(), v.size() * sizeof(float));
    } else {
      for (float x : v) f32(x);
    }
  }

 private:
  template <class U>
  void put(U v) {
    bytes(&v, sizeof(U));
  }
  std::ostream& os_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& is, std::string context) : is_(is), context_(std::move(context)) {}

  void bytes(void* data, std::size_t n) {
    is_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw ParseError(context_ + ": unexpected end of file");
  }
  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    bytes(got.data(), got.size());
    if (got != m) throw ParseError(context_ + ": bad magic, expected '" + std::string(m) + "'");
  }
  std::uint32_t u32() { return detail::byteswap_if_big(get<std::uint32_t>()); }
  std::uint64_t u64() { return detail::byteswap_if_big(get<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t max_len = 1u << 26) {
    const std::uint32_t n = u32();
    if (n > max_len) throw ParseError(context_ + ": string length out of range");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void f32_array(std::span<float> out) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(out.data(), out.size() * sizeof(float));
    } else {
      for (float& x : out) x = f32();
    }
  }
  bool at_eof() { return is_.peek() == std::char_traits<char>::eof(); }
  const std::string& context() const { return context_; }

 private:
  template <class U>
  U get() {
    U v;
    bytes(&v, sizeof(U));
    return v;
  }
  std::istream& is_;
  std::string context_;
};

}  // namespace ibrl::io
