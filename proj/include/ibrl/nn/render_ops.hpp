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

// Tape ops that connect a batch of log-space probes to rendered spheres.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ibrl/error.hpp"
#include "ibrl/nn/tensor.hpp"
#include "ibrl/relight.hpp"

namespace ibrl::nn {

// exp(Q) is evaluated with Q clamped to this range; the gradient is zero
// outside it.
inline constexpr double kLogProbeClamp = 80.0;

// Renders every probe of q [N, R, R, 3] through `op` to linear spheres
// [N, S, S, 3]. `op` must outlive the tape.
template <class T>
Tensor<T> relight_batch(Tape<T>& tape, const Tensor<T>& q, const RelightOperator<T>& op) {
  require(q.rank() == 4 && q.dim(1) == op.probe_resolution && q.dim(2) == op.probe_resolution &&
              q.dim(3) == 3,
          "relight_batch: probe batch " + shape_string(q.shape()) + " does not match the field");
  const int n = q.dim(0);
  const int s = op.sphere_resolution;
  const std::size_t probe_size = static_cast<std::size_t>(op.probe_pixels()) * 3;
  const std::size_t sphere_size = static_cast<std::size_t>(op.sphere_pixels()) * 3;
  const T lim = static_cast<T>(kLogProbeClamp);
  const bool track = tape.wants_grad({&q});
  Tensor<T> y = make_output<T>({n, s, s, 3}, track);
  std::vector<T> radiance(q.numel());
  for (std::size_t i = 0; i < radiance.size(); ++i) radiance[i] = std::exp(std::clamp(q.value()[i], -lim, lim));
  for (int k = 0; k < n; ++k)
    op.apply(std::span<const T>(radiance).subspan(k * probe_size, probe_size),
             y.value().subspan(k * sphere_size, sphere_size));
  if (track) {
    tape.record([q, y, &op, radiance = std::move(radiance), n, probe_size, sphere_size, lim]() mutable {
      if (!y.has_grad()) return;
      std::vector<T> g(probe_size);
      auto gq = q.grad();
      auto qv = q.value();
      for (int k = 0; k < n; ++k) {
        std::fill(g.begin(), g.end(), T(0));
        op.apply_transpose(std::span<const T>(y.grad()).subspan(k * sphere_size, sphere_size), g);
        for (std::size_t i = 0; i < probe_size; ++i) {
          const std::size_t j = k * probe_size + i;
          if (qv[j] > -lim && qv[j] < lim) gq[j] += g[i] * radiance[j];
        }
      }
    });
  }
  return y;
}

}  // namespace ibrl::nn
