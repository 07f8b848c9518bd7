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

#include <functional>
#include <vector>

#include "mgpff/filter_flow.hpp"
#include "mgpff/grid.hpp"
#include "mgpff/multigrid.hpp"
#include "mgpff/synth.hpp"

namespace mgpff {

struct TrackerConfig {
  int window = 3;  // K
  double threshold = 0.8;
  int joint_radius = 3;
  bool use_first_frame = false;

  void validate() const;
};

// Per-object probabilities, one channel per object.
struct MaskStack {
  Image probs;

  int num_objects() const { return probs.channels(); }
  static MaskStack from_labels(const Image& labels, int num_objects);
  // 0 for background, i for object i (1-based); the largest probability wins
  // among objects at or above `threshold`.
  Image labels(double threshold = 0.5) const;
};

// flows[i] pulls the target frame from the frame of history[i]. Warps,
// averages, thresholds and resolves overlaps by argmax.
MaskStack propagate_masks(const std::vector<MaskStack>& history,
                          const std::vector<CoordinateFlow>& flows, const TrackerConfig& cfg);

// Tracks the first-frame mask through the sequence. adjacent[t] pulls frame
// t+1 from frame t. Returns one stack per frame, the first being `first`.
std::vector<MaskStack> track_masks(const std::vector<CoordinateFlow>& adjacent,
                                   const MaskStack& first, const TrackerConfig& cfg);
std::vector<MaskStack> track_masks(const std::vector<Image>& frames, const MaskStack& first,
                                   const PairFlowFn& flow_fn, const TrackerConfig& cfg);

// Cone-shaped disk of radius r: 1 - dist/(r+1) inside, 0 outside.
Image joint_heatmap(int height, int width, const Joint& joint, int radius);

std::vector<Joint> propagate_pose(const std::vector<Joint>& joints, const CoordinateFlow& flow,
                                  const TrackerConfig& cfg);

// Per-frame joints, the first being `first`.
std::vector<std::vector<Joint>> track_pose(const std::vector<CoordinateFlow>& adjacent,
                                           const std::vector<Joint>& first,
                                           const TrackerConfig& cfg);

struct ShotConfig {
  int trailing = 20;
  int min_history = 5;
  double mad_factor = 3.0;
  // The error must also exceed this multiple of the trailing median.
  double min_ratio = 2.0;

  void validate() const;
};

// errors[t] is the reconstruction error of frame t+1 from frame t. Returns
// the indices of frames that start a new shot.
std::vector<int> detect_shots_from_errors(const std::vector<double>& errors,
                                          const ShotConfig& cfg = {});

using PairSolveFn = std::function<MultigridResult(const Image& src, const Image& tgt)>;

// Mean Charbonnier error of each adjacent pair's reconstruction.
std::vector<double> pair_errors(const std::vector<Image>& frames, const PairSolveFn& solve);

std::vector<int> detect_shots(const std::vector<Image>& frames, const PairSolveFn& solve,
                              const ShotConfig& cfg = {});

double eval_jaccard(const Image& pred, const Image& gt);
double eval_boundary_f(const Image& pred, const Image& gt, double tolerance = 2.0);
double eval_pck(const std::vector<Joint>& pred, const std::vector<Joint>& gt, double tau,
                double bbox_size);
double recon_l1(const Image& a, const Image& b);

}  // namespace mgpff
