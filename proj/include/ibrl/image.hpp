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

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "ibrl/error.hpp"

namespace ibrl {

// Interleaved row-major image: value(x, y, c) lives at ((y * width) + x) *
// channels + c. Row 0 is the top of the picture.
template <class T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    require(width >= 0 && height >= 0 && channels > 0, "Image: bad dimensions");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const {
    return data_[index(x, y, c)];
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using ImageF = Image<float>;
using ImageD = Image<double>;

template <class T>
Image<T> flip_horizontal(const Image<T>& in) {
  Image<T> out(in.width(), in.height(), in.channels());
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x)
      for (int c = 0; c < in.channels(); ++c)
        out(in.width() - 1 - x, y, c) = in(x, y, c);
  return out;
}

template <class To, class From>
Image<To> image_cast(const Image<From>& in) {
  Image<To> out(in.width(), in.height(), in.channels());
  std::transform(in.values().begin(), in.values().end(), out.values().begin(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

// Bilinear lookup with pixel centers at integer + 0.5; coordinates outside the
// image clamp to the border.
template <class T>
double sample_bilinear(const Image<T>& img, double u, double v, int c) {
  const double fx = std::clamp(u - 0.5, 0.0, static_cast<double>(img.width() - 1));
  const double fy = std::clamp(v - 0.5, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double ax = fx - x0;
  const double ay = fy - y0;
  const double top = (1.0 - ax) * img(x0, y0, c) + ax * img(x1, y0, c);
  const double bottom = (1.0 - ax) * img(x0, y1, c) + ax * img(x1, y1, c);
  return (1.0 - ay) * top + ay * bottom;
}

}  // namespace ibrl
