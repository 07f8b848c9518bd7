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

#include "mgpff/filter_flow.hpp"
#include "mgpff/grid.hpp"

namespace mgpff {

enum class ShapeKind { Rect, Disk, Stick };
enum class MotionKind { Translation, Sinusoidal, Rotation };
enum class TextureKind { Flat, Noise };

ShapeKind parse_shape_kind(const std::string& s);
MotionKind parse_motion_kind(const std::string& s);
TextureKind parse_texture_kind(const std::string& s);
const char* to_string(ShapeKind k);
const char* to_string(MotionKind k);
const char* to_string(TextureKind k);

// Smooth multi-octave value noise in [0, 1], defined on the whole plane.
double value_noise(double row, double col, std::uint64_t seed, double base_cell = 8.0);

// Noise texture sampled at (r + offset_row, c + offset_col).
Image noise_image(int height, int width, std::uint64_t seed, double offset_row = 0.0,
                  double offset_col = 0.0, int channels = 1, double base_cell = 8.0);

struct ShapeSpec {
  ShapeKind kind = ShapeKind::Rect;
  double row = 32.0;  // centre at frame 0
  double col = 32.0;
  // Rect: half-height and half-width. Disk: radius in size_a. Stick: the
  // segment runs from the centre for size_a pixels at `angle`, thickness size_b.
  double size_a = 8.0;
  double size_b = 8.0;
  double angle = 0.0;
  MotionKind motion = MotionKind::Translation;
  double v_row = 0.0;  // translation, px per frame
  double v_col = 0.0;
  double amp_row = 0.0;  // sinusoidal amplitude and period in frames
  double amp_col = 0.0;
  double period = 8.0;
  double angular = 0.0;  // rotation about the canvas centre, rad per frame
  TextureKind texture = TextureKind::Noise;
  double flat_value = 0.8;
  std::uint64_t texture_seed = 1;
};

struct SynthSceneConfig {
  int height = 64;
  int width = 64;
  int channels = 1;
  int frames = 10;
  // Random shapes are drawn when `shapes` is empty.
  int shape_count = 1;
  std::vector<ShapeKind> kinds{ShapeKind::Rect};
  MotionKind motion = MotionKind::Translation;
  double max_speed = 1.0;
  double min_size = 6.0;
  double max_size = 12.0;
  double amplitude = 4.0;
  double period = 8.0;
  double angular = 0.05;
  bool integer_motion = true;
  TextureKind texture = TextureKind::Noise;
  double bg_v_row = 0.0;  // background pan, px per frame
  double bg_v_col = 0.0;
  TextureKind bg_texture = TextureKind::Noise;
  double texture_cell = 8.0;
  std::uint64_t seed = 0;
  std::vector<ShapeSpec> shapes;

  void validate() const;
};

struct Joint {
  double row = 0.0;
  double col = 0.0;
  bool visible = true;

  bool operator==(const Joint&) const = default;
};

struct SynthSequence {
  std::vector<Image> frames;
  // flows[t] pulls frame t+1 from frame t.
  std::vector<CoordinateFlow> flows;
  // Label images: 0 background, i for shape i (1-based), topmost wins.
  std::vector<Image> labels;
  // Per frame, two joints (base, tip) for every stick shape in order.
  std::vector<std::vector<Joint>> joints;
  std::vector<ShapeSpec> shapes;
  int num_objects = 0;
};

// Fills in random shapes from the seed when cfg.shapes is empty.
std::vector<ShapeSpec> resolve_shapes(const SynthSceneConfig& cfg);

// Renders the scene; throws ConfigError when a shape leaves the canvas.
SynthSequence render_scene(const SynthSceneConfig& cfg);

// Randomised scene for predictor training corpora: a rectangle and a disk
// with non-integer motion over a background panning by up to 1.5 px/frame.
SynthSceneConfig training_scene_config(std::uint64_t seed, int size = 64, int frames = 6,
                                       double texture_cell = 8.0);

// Binary mask of one object from a label image.
Image object_mask(const Image& labels, int object);

}  // namespace mgpff
