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

#include "mgpff/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "mgpff/errors.hpp"

namespace mgpff {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::int64_t r, std::int64_t c, std::uint64_t seed) {
  std::uint64_t h = mix(seed);
  h = mix(h ^ static_cast<std::uint64_t>(r));
  h = mix(h ^ static_cast<std::uint64_t>(c));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double octave(double row, double col, double cell, std::uint64_t seed) {
  const double y = row / cell, x = col / cell;
  const double fy = std::floor(y), fx = std::floor(x);
  const auto iy = static_cast<std::int64_t>(fy), ix = static_cast<std::int64_t>(fx);
  const double ty = smooth(y - fy), tx = smooth(x - fx);
  const double top = lattice(iy, ix, seed) * (1 - tx) + lattice(iy, ix + 1, seed) * tx;
  const double bot = lattice(iy + 1, ix, seed) * (1 - tx) + lattice(iy + 1, ix + 1, seed) * tx;
  return top * (1 - ty) + bot * ty;
}

// Rigid pose: q -> R(rot) (q - pivot) + pivot + (tr, tc).
struct Pose {
  double rot = 0.0;
  double tr = 0.0;
  double tc = 0.0;
  double pr = 0.0;
  double pc = 0.0;

  std::array<double, 2> apply(double r, double c) const {
    const double s = std::sin(rot), co = std::cos(rot);
    const double dr = r - pr, dc = c - pc;
    return {pr + co * dr + s * dc + tr, pc - s * dr + co * dc + tc};
  }
  std::array<double, 2> invert(double r, double c) const {
    const double s = std::sin(rot), co = std::cos(rot);
    const double dr = r - tr - pr, dc = c - tc - pc;
    return {pr + co * dr - s * dc, pc + s * dr + co * dc};
  }
};

Pose pose_at(const ShapeSpec& s, const SynthSceneConfig& cfg, int t) {
  Pose p;
  p.pr = cfg.height / 2;
  p.pc = cfg.width / 2;
  switch (s.motion) {
    case MotionKind::Translation:
      p.tr = s.v_row * t;
      p.tc = s.v_col * t;
      break;
    case MotionKind::Sinusoidal: {
      const double phase = std::sin(2.0 * std::numbers::pi * t / s.period);
      p.tr = s.amp_row * phase;
      p.tc = s.amp_col * phase;
      break;
    }
    case MotionKind::Rotation:
      p.rot = s.angular * t;
      break;
  }
  return p;
}

std::array<double, 2> stick_dir(const ShapeSpec& s) { return {std::sin(s.angle), std::cos(s.angle)}; }

// Membership in the frame-0 reference placement.
bool contains(const ShapeSpec& s, double r, double c) {
  const double dr = r - s.row, dc = c - s.col;
  switch (s.kind) {
    case ShapeKind::Rect:
      return std::abs(dr) < s.size_a && std::abs(dc) < s.size_b;
    case ShapeKind::Disk:
      return dr * dr + dc * dc < s.size_a * s.size_a;
    case ShapeKind::Stick: {
      const auto [ur, uc] = stick_dir(s);
      const double along = dr * ur + dc * uc;
      const double across = -dr * uc + dc * ur;
      return along >= -s.size_b / 2 && along <= s.size_a + s.size_b / 2 &&
             std::abs(across) <= s.size_b / 2;
    }
  }
  return false;
}

// Extreme points of the reference shape, used for the canvas check.
std::vector<std::array<double, 2>> outline(const ShapeSpec& s) {
  std::vector<std::array<double, 2>> pts;
  switch (s.kind) {
    case ShapeKind::Rect:
      for (double a : {-1.0, 1.0})
        for (double b : {-1.0, 1.0}) pts.push_back({s.row + a * s.size_a, s.col + b * s.size_b});
      break;
    case ShapeKind::Disk:
      for (int i = 0; i < 64; ++i) {
        const double th = 2.0 * std::numbers::pi * i / 64;
        pts.push_back({s.row + s.size_a * std::sin(th), s.col + s.size_a * std::cos(th)});
      }
      break;
    case ShapeKind::Stick: {
      const auto [ur, uc] = stick_dir(s);
      const double h = s.size_b / 2;
      for (double along : {-h, s.size_a + h})
        for (double across : {-h, h})
          pts.push_back({s.row + along * ur - across * uc, s.col + along * uc + across * ur});
      break;
    }
  }
  return pts;
}

bool stays_inside(const ShapeSpec& s, const SynthSceneConfig& cfg) {
  for (int t = 0; t < cfg.frames; ++t) {
    const Pose p = pose_at(s, cfg, t);
    for (const auto& q : outline(s)) {
      const auto x = p.apply(q[0], q[1]);
      if (x[0] < 1.0 || x[0] > cfg.height - 2.0 || x[1] < 1.0 || x[1] > cfg.width - 2.0) {
        return false;
      }
    }
  }
  return true;
}

double shape_value(const ShapeSpec& s, double r, double c, int ch, double cell) {
  if (s.texture == TextureKind::Flat) return s.flat_value;
  return value_noise(r, c, s.texture_seed + 7919u * static_cast<std::uint64_t>(ch), cell);
}

}  // namespace

ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "rect") return ShapeKind::Rect;
  if (s == "disk") return ShapeKind::Disk;
  if (s == "stick") return ShapeKind::Stick;
  throw ConfigError("unknown shape kind '" + s + "' (rect, disk, stick)");
}

MotionKind parse_motion_kind(const std::string& s) {
  if (s == "translation") return MotionKind::Translation;
  if (s == "sinusoidal") return MotionKind::Sinusoidal;
  if (s == "rotation") return MotionKind::Rotation;
  throw ConfigError("unknown motion '" + s + "' (translation, sinusoidal, rotation)");
}

TextureKind parse_texture_kind(const std::string& s) {
  if (s == "flat") return TextureKind::Flat;
  if (s == "noise") return TextureKind::Noise;
  throw ConfigError("unknown texture '" + s + "' (flat, noise)");
}

const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Rect: return "rect";
    case ShapeKind::Disk: return "disk";
    case ShapeKind::Stick: return "stick";
  }
  return "?";
}

const char* to_string(MotionKind k) {
  switch (k) {
    case MotionKind::Translation: return "translation";
    case MotionKind::Sinusoidal: return "sinusoidal";
    case MotionKind::Rotation: return "rotation";
  }
  return "?";
}

const char* to_string(TextureKind k) { return k == TextureKind::Flat ? "flat" : "noise"; }

double value_noise(double row, double col, std::uint64_t seed, double base_cell) {
  return 0.5 * octave(row, col, base_cell, seed) + 0.3 * octave(row, col, base_cell / 2, seed + 1) +
         0.2 * octave(row, col, base_cell / 4, seed + 2);
}

Image noise_image(int height, int width, std::uint64_t seed, double offset_row,
                  double offset_col, int channels, double base_cell) {
  Image img(height, width, channels);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      for (int ch = 0; ch < channels; ++ch)
        img.at(r, c, ch) = value_noise(r + offset_row, c + offset_col,
                                       seed + 7919u * static_cast<std::uint64_t>(ch), base_cell);
  return img;
}

void SynthSceneConfig::validate() const {
  if (height < 4 || width < 4) throw ConfigError("synth: canvas must be at least 4x4");
  if (channels != 1 && channels != 3) throw ConfigError("synth: channels must be 1 or 3");
  if (frames < 2) throw ConfigError("synth: need at least 2 frames");
  if (shapes.empty() && shape_count < 0) throw ConfigError("synth: shape_count must be >= 0");
  if (shapes.empty() && shape_count > 0 && kinds.empty()) {
    throw ConfigError("synth: no shape kinds given");
  }
  if (!(min_size > 0.0) || max_size < min_size) throw ConfigError("synth: bad size range");
  if (!(max_speed >= 0.0)) throw ConfigError("synth: max_speed must be >= 0");
  if (!(period > 0.0)) throw ConfigError("synth: period must be positive");
  if (!(texture_cell > 0.0)) throw ConfigError("synth: texture_cell must be positive");
  for (const auto& s : shapes) {
    if (!(s.size_a > 0.0) || !(s.size_b > 0.0)) throw ConfigError("synth: shape sizes must be positive");
    if (s.motion == MotionKind::Sinusoidal && !(s.period > 0.0)) {
      throw ConfigError("synth: shape period must be positive");
    }
  }
}

std::vector<ShapeSpec> resolve_shapes(const SynthSceneConfig& cfg) {
  cfg.validate();
  if (!cfg.shapes.empty()) return cfg.shapes;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ShapeSpec> out;
  for (int i = 0; i < cfg.shape_count; ++i) {
    ShapeSpec best;
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      ShapeSpec s;
      s.kind = cfg.kinds[static_cast<std::size_t>(i) % cfg.kinds.size()];
      s.motion = cfg.motion;
      s.texture = cfg.texture;
      s.texture_seed = cfg.seed * 1000003u + 17u * static_cast<std::uint64_t>(i) + 101u;
      s.flat_value = 0.3 + 0.6 * unit(rng);
      const double size = cfg.min_size + (cfg.max_size - cfg.min_size) * unit(rng);
      s.size_a = size;
      s.size_b = cfg.min_size + (cfg.max_size - cfg.min_size) * unit(rng);
      s.row = size + (cfg.height - 2 * size) * unit(rng);
      s.col = size + (cfg.width - 2 * size) * unit(rng);
      if (s.kind == ShapeKind::Stick) {
        s.size_a = 2.0 * size;
        s.size_b = 3.0;
        s.angle = 2.0 * std::numbers::pi * unit(rng);
        if (cfg.motion == MotionKind::Rotation) {
          s.row = cfg.height / 2;
          s.col = cfg.width / 2;
        }
      }
      if (s.kind == ShapeKind::Disk) s.size_b = s.size_a;
      const double vr = (2.0 * unit(rng) - 1.0) * cfg.max_speed;
      const double vc = (2.0 * unit(rng) - 1.0) * cfg.max_speed;
      s.v_row = cfg.integer_motion ? std::round(vr) : vr;
      s.v_col = cfg.integer_motion ? std::round(vc) : vc;
      s.amp_row = (2.0 * unit(rng) - 1.0) * cfg.amplitude;
      s.amp_col = (2.0 * unit(rng) - 1.0) * cfg.amplitude;
      s.period = cfg.period;
      s.angular = cfg.angular;
      if (stays_inside(s, cfg)) {
        best = s;
        placed = true;
      }
    }
    if (!placed) {
      throw ConfigError("synth: could not place shape " + std::to_string(i) +
                        " inside the canvas for all frames; reduce sizes or speed");
    }
    out.push_back(best);
  }
  return out;
}

SynthSequence render_scene(const SynthSceneConfig& cfg) {
  SynthSequence seq;
  seq.shapes = resolve_shapes(cfg);
  seq.num_objects = static_cast<int>(seq.shapes.size());
  for (std::size_t i = 0; i < seq.shapes.size(); ++i) {
    if (!stays_inside(seq.shapes[i], cfg)) {
      throw ConfigError("synth: shape " + std::to_string(i) + " leaves the canvas");
    }
  }
  const int h = cfg.height, w = cfg.width, nch = cfg.channels;
  const std::uint64_t bg_seed = cfg.seed * 1000003u + 7u;

  std::vector<std::vector<Pose>> poses(static_cast<std::size_t>(cfg.frames));
  for (int t = 0; t < cfg.frames; ++t)
    for (const auto& s : seq.shapes) poses[static_cast<std::size_t>(t)].push_back(pose_at(s, cfg, t));

  for (int t = 0; t < cfg.frames; ++t) {
    const auto& pt = poses[static_cast<std::size_t>(t)];
    Image frame(h, w, nch), labels(h, w, 1);
    const double orow = cfg.bg_v_row * t, ocol = cfg.bg_v_col * t;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        int top = 0;
        std::array<double, 2> q{};
        for (std::size_t i = seq.shapes.size(); i-- > 0;) {
          const auto ref = pt[i].invert(r, c);
          if (contains(seq.shapes[i], ref[0], ref[1])) {
            top = static_cast<int>(i) + 1;
            q = ref;
            break;
          }
        }
        labels.at(r, c) = top;
        for (int ch = 0; ch < nch; ++ch) {
          double v;
          if (top > 0) {
            v = shape_value(seq.shapes[static_cast<std::size_t>(top - 1)], q[0], q[1], ch,
                            cfg.texture_cell);
          } else if (cfg.bg_texture == TextureKind::Flat) {
            v = 0.2;
          } else {
            v = value_noise(r - orow, c - ocol, bg_seed + 7919u * static_cast<std::uint64_t>(ch),
                            cfg.texture_cell);
          }
          frame.at(r, c, ch) = v;
        }
      }

    std::vector<Joint> joints;
    for (std::size_t i = 0; i < seq.shapes.size(); ++i) {
      const auto& s = seq.shapes[i];
      if (s.kind != ShapeKind::Stick) continue;
      const auto [ur, uc] = stick_dir(s);
      for (double along : {0.0, s.size_a}) {
        const auto x = pt[i].apply(s.row + along * ur, s.col + along * uc);
        joints.push_back({x[0], x[1], true});
      }
    }
    seq.frames.push_back(std::move(frame));
    seq.labels.push_back(std::move(labels));
    seq.joints.push_back(std::move(joints));

    if (t == 0) continue;
    const auto& prev = poses[static_cast<std::size_t>(t - 1)];
    const auto& cur_labels = seq.labels.back();
    CoordinateFlow flow(h, w, -cfg.bg_v_row, -cfg.bg_v_col);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const int top = static_cast<int>(cur_labels.at(r, c));
        if (top == 0) continue;
        const std::size_t i = static_cast<std::size_t>(top - 1);
        const auto ref = pt[i].invert(r, c);
        const auto src = prev[i].apply(ref[0], ref[1]);
        flow.d_row(r, c) = src[0] - r;
        flow.d_col(r, c) = src[1] - c;
      }
    seq.flows.push_back(std::move(flow));
  }
  return seq;
}

Image object_mask(const Image& labels, int object) {
  Image out(labels.height(), labels.width(), 1);
  for (std::size_t i = 0; i < labels.data().size(); ++i)
    out.storage()[i] = labels.data()[i] == object ? 1.0 : 0.0;
  return out;
}

SynthSceneConfig training_scene_config(std::uint64_t seed, int size, int frames, double texture_cell) {
  std::mt19937_64 rng(seed * 77 + 1);
  std::uniform_real_distribution<double> pan(-1.5, 1.5);
  SynthSceneConfig cfg;
  cfg.height = cfg.width = size;
  cfg.frames = frames;
  cfg.seed = seed;
  cfg.shape_count = 2;
  cfg.kinds = {ShapeKind::Rect, ShapeKind::Disk};
  cfg.min_size = size * 6.0 / 64.0;
  cfg.max_size = size * 12.0 / 64.0;
  cfg.bg_v_row = pan(rng);
  cfg.bg_v_col = pan(rng);
  cfg.max_speed = 1.5;
  cfg.integer_motion = false;
  cfg.texture_cell = texture_cell;
  return cfg;
}

}  // namespace mgpff
