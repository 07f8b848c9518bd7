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
#include <functional>
#include <string>
#include <vector>

#include "mgpff/losses.hpp"
#include "mgpff/multigrid.hpp"
#include "mgpff/predictor.hpp"

namespace mgpff {

struct TrainConfig {
  AdamConfig adam;
  int iterations = 1000;
  int pair_window = 5;  // pairs (i, j) with 0 < j - i < pair_window
  int batch_size = 1;
  bool flip = true;
  bool rotate90 = true;
  LossWeights weights;
  double clip_norm = 10.0;
  int checkpoint_every = 0;  // 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

// Frame sequences; pairs are never drawn across sequence boundaries.
struct Corpus {
  std::vector<std::vector<Image>> sequences;

  std::size_t frame_count() const;
  void validate() const;
};

struct TrainLogRow {
  int iteration = 0;
  int scale = 1;
  LossBreakdown ba;
  LossBreakdown ab;
};

struct TrainResult {
  PredictorParams params;
  std::vector<TrainLogRow> log;
  // Sum over scales and directions of the total loss, one entry per iteration.
  std::vector<double> totals;
};

struct TrainHooks {
  std::function<void(int iteration, double total)> progress;
  std::function<void(int iteration, const PredictorParams& params)> checkpoint;
};

Image augment_image(const Image& img, bool flip_h, bool flip_v, int quarter_turns);

// One training step on a pair: the multiscale bidirectional objective with
// gradients accumulated into `grads`. Coarser accumulated flows are held
// constant. Returns the per-scale breakdowns.
std::vector<TrainLogRow> accumulate_pair_gradient(const Model& model, const Image& img_b,
                                                  const Image& img_a, const PyramidConfig& pyr,
                                                  const LossWeights& weights,
                                                  PredictorParams& grads);

TrainResult train(const Corpus& corpus, const Model& init, const TrainConfig& cfg,
                  const PyramidConfig& pyr, const TrainHooks& hooks = {});

void write_train_log(const std::vector<TrainLogRow>& log, const std::string& path);

}  // namespace mgpff
