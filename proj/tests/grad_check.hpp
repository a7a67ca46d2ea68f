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

// Central-difference gradient checking shared by the tensor and network tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ibrl/nn/tensor.hpp"
#include "ibrl/rng.hpp"

namespace ibrl::testing {

struct InputSpec {
  nn::Shape shape;
  double lo = -1.0;
  double hi = 1.0;
};

inline std::vector<std::vector<double>> random_inputs(const std::vector<InputSpec>& specs, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> xs;
  for (const auto& s : specs) {
    std::vector<double> v(nn::shape_numel(s.shape));
    for (double& e : v) e = rng.uniform(s.lo, s.hi);
    xs.push_back(std::move(v));
  }
  return xs;
}

// Scalar probe loss sum_i r_i y_i with fixed pseudo-random r, evaluated in T.
template <class T, class Op>
double probe_loss(Op& op, const std::vector<InputSpec>& specs, const std::vector<std::vector<double>>& xs,
                  std::vector<std::vector<double>>* grads) {
  nn::Tape<T> tape(grads != nullptr);
  std::vector<nn::Tensor<T>> in;
  for (std::size_t k = 0; k < xs.size(); ++k)
    in.push_back(nn::Tensor<T>::from(specs[k].shape, std::vector<T>(xs[k].begin(), xs[k].end()), true));
  nn::Tensor<T> y = op(tape, in);
  Rng rng(777);
  std::vector<T> r(y.numel());
  for (T& e : r) e = static_cast<T>(rng.uniform(0.5, 1.5) * (rng.bernoulli(0.5) ? 1.0 : -1.0));
  double loss = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) loss += static_cast<double>(r[i]) * static_cast<double>(y.value()[i]);
  if (grads) {
    auto gy = y.grad();
    for (std::size_t i = 0; i < gy.size(); ++i) gy[i] = r[i];
    // Seeding through the output gradient replays the tape without a scalar loss.
    nn::Tensor<T> seed = nn::Tensor<T>::scalar(T(0), true);
    tape.record([] {});
    tape.backward(seed);
    grads->clear();
    for (auto& t : in) grads->emplace_back(t.grad().begin(), t.grad().end());
  }
  return loss;
}

// Maximum relative error between the analytic gradient (computed in T) and
// 64-bit fourth-order central differences. Errors are relative to
// max(|a|, |n|) with a floor of 1e-3 of the largest gradient magnitude.
template <class T, class Op>
double gradient_error(Op op, const std::vector<InputSpec>& specs, std::uint64_t seed, double h = 1e-4) {
  auto xs = random_inputs(specs, seed);
  std::vector<std::vector<double>> analytic;
  probe_loss<T>(op, specs, xs, &analytic);
  double scale = 0.0;
  for (const auto& g : analytic)
    for (double v : g) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (std::size_t i = 0; i < xs[k].size(); ++i) {
      const double x0 = xs[k][i];
      auto at = [&](double offset) {
        xs[k][i] = x0 + offset;
        return probe_loss<double>(op, specs, xs, nullptr);
      };
      const double num = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      xs[k][i] = x0;
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(num), 1e-3 * scale, 1e-300});
      worst = std::max(worst, std::abs(a - num) / denom);
    }
  }
  return worst;
}

}  // namespace ibrl::testing
