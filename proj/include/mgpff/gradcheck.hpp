// Copyright 2026 The mgpff Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgpff/predictor.hpp"

namespace mgpff {

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  int instances = 0;

  bool passed() const { return max_rel_error < tolerance; }
};

// Central-difference checks of every loss term and of the bidirectional
// objective on random size x size instances (2 channels, double precision).
// One entry per term, each the worst case over `instances` draws.
std::vector<GradcheckEntry> loss_gradchecks(std::uint64_t seed, int instances = 20, int size = 8,
                                            int k = 3);

// Network backward against double-precision central differences of the
// objective on `samples` random weights. With single_precision the analytic
// gradient comes from the float tape.
GradcheckEntry network_gradcheck(const NetConfig& cfg, int size, std::uint64_t seed,
                                 int samples = 200, bool single_precision = true);

}  // namespace mgpff
