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

// Synthesis settings shared by tests that need examples with no pixel near
// the soft-clip knee.
#pragma once

#include <vector>

#include "ibrl/scene_synth.hpp"

namespace ibrl::testing {

// Weak, broad lights over bright ground keep every sphere below the knee most
// of the time.
inline SynthSpec unclipped_spec() {
  SynthSpec s;
  s.environment.light_ratio = {0.1, 1.0};
  s.environment.light_radius_deg = {15.0, 40.0};
  s.scene.albedo = {0.6, 0.9};
  return s;
}

inline std::vector<TrainingExample> unclipped_examples(std::size_t n, std::uint64_t seed, const FieldSet& fields) {
  std::vector<TrainingExample> out;
  const SynthSpec spec = unclipped_spec();
  for (std::uint64_t i = 0; out.size() < n; ++i) {
    TrainingExample ex = make_example(derive_seed(seed, i), spec, fields);
    if (is_unclipped(ex)) out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace ibrl::testing
