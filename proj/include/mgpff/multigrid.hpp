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

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "mgpff/filter_flow.hpp"
#include "mgpff/grid.hpp"
#include "mgpff/losses.hpp"
#include "mgpff/predictor.hpp"

namespace mgpff {

struct PyramidConfig {
  int levels = 3;
  int k = 7;

  void validate() const;
  int radius() const { return k / 2; }
  int size_multiple() const { return 1 << (levels - 1); }
  // Largest full-resolution displacement the pyramid can express.
  int max_displacement() const { return radius() * ((1 << levels) - 1); }
};

// Total kernel coefficients predicted per direction over the whole pyramid
// for an input of the given size (after padding).
std::size_t pyramid_coefficient_count(int height, int width, const PyramidConfig& cfg);

using FieldPair = std::pair<FilterFlowField, FilterFlowField>;

// Predicts (T_ba, T_ab) for one scale. `scale_index` is 1 at full resolution.
using ScalePredictor = std::function<FieldPair(const DirectedPair& pair, int scale_index)>;

struct ScaleRecord {
  int scale_index = 1;
  FilterFlowField field_ba;
  FilterFlowField field_ab;
  CoordinateFlow residual_ba;
  CoordinateFlow residual_ab;
  // Accumulated flows after this scale's update, at this scale's resolution.
  CoordinateFlow flow_ba;
  CoordinateFlow flow_ab;
  // Filter output on the warped source.
  Image recon;
  LossBreakdown loss_ba;
  LossBreakdown loss_ab;
};

struct MultigridResult {
  std::vector<ScaleRecord> scales;  // coarse to fine
  CoordinateFlow flow;              // B->A pull flow, padded full resolution
  CoordinateFlow flow_ab;
  Image recon;  // I_B warped by `flow`, cropped to the input size
  int height = 0;
  int width = 0;

  CoordinateFlow cropped_flow() const { return crop(flow, height, width); }
  CoordinateFlow cropped_flow_ab() const { return crop(flow_ab, height, width); }
};

// Runs the residual pyramid from the coarsest scale down. Inputs are padded
// to a multiple of 2^(levels-1) by replication.
MultigridResult coarse_to_fine(const ScalePredictor& predict, const Image& img_b,
                               const Image& img_a, const PyramidConfig& cfg,
                               const LossWeights& weights = {});

// Default weights for the direct solver. Free per-pixel logits have no
// shared-weight spatial prior, so smoothness is weighted 10x higher than in
// training.
LossWeights solver_default_weights();

struct SolverOptions {
  int iterations = 500;
  double learning_rate = 0.05;
  // Upper bound on H*W*k^2 at full (padded) resolution.
  std::size_t budget = std::size_t{1} << 22;
  LossWeights weights = solver_default_weights();

  void validate() const;
};

// Optimizes the logits of both directions for one scale from uniform kernels.
FieldPair solve_scale(const DirectedPair& pair, int k, int scale_index, const SolverOptions& opt);

MultigridResult solve_direct(const Image& img_b, const Image& img_a, const PyramidConfig& cfg,
                             const SolverOptions& opt = {});

ScalePredictor network_predictor(const Model& model);

MultigridResult infer_network(const Model& model, const Image& img_b, const Image& img_a,
                              const PyramidConfig& cfg);

// B->A pull flow for an adjacent pair (src = frame t, tgt = frame t+1),
// cropped to the frame size.
using PairFlowFn = std::function<CoordinateFlow(const Image& src, const Image& tgt)>;

PairFlowFn direct_flow_fn(const PyramidConfig& cfg, const SolverOptions& opt = {});
PairFlowFn network_flow_fn(const Model& model, const PyramidConfig& cfg);

// `adjacent[t]` pulls frame t+1 from frame t. The result pulls frame j from
// frame i.
CoordinateFlow long_range_flow(const std::vector<CoordinateFlow>& adjacent, int i, int j);
CoordinateFlow long_range_flow(const std::vector<Image>& frames, int i, int j,
                               const PairFlowFn& flow_fn);

}  // namespace mgpff
