#include <cmath>

#include "doctest.h"
#include "mgpff/errors.hpp"
#include "mgpff/synth.hpp"

using namespace mgpff;

namespace {

SynthSceneConfig one_rect(double v_row, double v_col, int frames = 5) {
  SynthSceneConfig cfg;
  cfg.frames = frames;
  ShapeSpec s;
  s.row = 32;
  s.col = 24;
  s.size_a = 10;
  s.size_b = 8;
  s.v_row = v_row;
  s.v_col = v_col;
  cfg.shapes = {s};
  return cfg;
}

// Pixels whose 3x3 neighbourhood has the same object label in both frames.
bool persistent_interior(const SynthSequence& seq, int t, int r, int c, int object) {
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) {
      const int y = r + dy, x = c + dx;
      if (y < 0 || x < 0 || y >= seq.labels[0].height() || x >= seq.labels[0].width()) return false;
      if (seq.labels[t + 1].at(y, x) != object) return false;
    }
  const int sr = static_cast<int>(std::lround(r + seq.flows[t].d_row(r, c)));
  const int sc = static_cast<int>(std::lround(c + seq.flows[t].d_col(r, c)));
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) {
      const int y = sr + dy, x = sc + dx;
      if (y < 0 || x < 0 || y >= seq.labels[0].height() || x >= seq.labels[0].width()) return false;
      if (seq.labels[t].at(y, x) != object) return false;
    }
  return true;
}

}  // namespace

TEST_CASE("translation ground truth uses the pull sign") {
  const auto seq = render_scene(one_rect(0, 2));
  REQUIRE(seq.frames.size() == 5);
  REQUIRE(seq.flows.size() == 4);
  // Centre of the rectangle in frame 1 came from two columns to the left.
  CHECK(seq.labels[1].at(32, 26) == 1);
  CHECK(seq.flows[0].d_row(32, 26) == doctest::Approx(0.0));
  CHECK(seq.flows[0].d_col(32, 26) == doctest::Approx(-2.0));
  // Static background.
  CHECK(seq.flows[0].d_col(2, 2) == 0.0);
  for (int t = 0; t < 4; ++t) {
    const auto recon = warp_with_flow(seq.frames[t], seq.flows[t]);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c)
        if (persistent_interior(seq, t, r, c, 1)) CHECK(std::abs(recon.at(r, c) - seq.frames[t + 1].at(r, c)) < 1e-6);
  }
}

TEST_CASE("warp of ground truth reproduces every motion model on shape interiors") {
  for (auto motion : {MotionKind::Translation, MotionKind::Sinusoidal, MotionKind::Rotation}) {
    CAPTURE(to_string(motion));
    SynthSceneConfig cfg;
    cfg.frames = 6;
    cfg.shape_count = 2;
    cfg.kinds = {ShapeKind::Rect, ShapeKind::Disk};
    cfg.motion = motion;
    cfg.integer_motion = false;
    cfg.texture_cell = 16;
    cfg.bg_texture = TextureKind::Flat;
    cfg.seed = 4;
    const auto seq = render_scene(cfg);
    int checked = 0;
    double worst = 0.0;
    for (int t = 0; t + 1 < cfg.frames; ++t) {
      const auto recon = warp_with_flow(seq.frames[t], seq.flows[t]);
      for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c)
          for (int obj = 1; obj <= 2; ++obj)
            if (persistent_interior(seq, t, r, c, obj)) {
              worst = std::max(worst, std::abs(recon.at(r, c) - seq.frames[t + 1].at(r, c)));
              ++checked;
            }
    }
    CHECK(checked > 100);
    // Non-integer motion resamples a smooth texture; the error is the
    // bilinear interpolation error of that texture.
    CHECK(worst < 0.05);
  }
}

TEST_CASE("same seed gives identical sequences") {
  SynthSceneConfig cfg;
  cfg.shape_count = 3;
  cfg.kinds = {ShapeKind::Rect, ShapeKind::Disk};
  cfg.seed = 11;
  const auto a = render_scene(cfg);
  const auto b = render_scene(cfg);
  CHECK(a.frames == b.frames);
  CHECK(a.flows == b.flows);
  CHECK(a.labels == b.labels);
  cfg.seed = 12;
  CHECK(render_scene(cfg).frames != a.frames);
}

TEST_CASE("rotation fixes the canvas centre") {
  SynthSceneConfig cfg;
  cfg.frames = 4;
  cfg.motion = MotionKind::Rotation;
  ShapeSpec s;
  s.kind = ShapeKind::Rect;
  s.row = 32;
  s.col = 32;
  s.size_a = 20;
  s.size_b = 12;
  s.motion = MotionKind::Rotation;
  s.angular = 0.1;
  cfg.shapes = {s};
  const auto seq = render_scene(cfg);
  for (const auto& f : seq.flows) {
    CHECK(f.d_row(32, 32) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f.d_col(32, 32) == doctest::Approx(0.0).epsilon(1e-12));
  }
  // A point off centre moves.
  CHECK(std::hypot(seq.flows[0].d_row(32, 40), seq.flows[0].d_col(32, 40)) > 0.5);
}

TEST_CASE("stick figures carry two joints") {
  SynthSceneConfig cfg;
  cfg.frames = 5;
  cfg.kinds = {ShapeKind::Stick};
  cfg.motion = MotionKind::Rotation;
  cfg.angular = 0.1;
  cfg.seed = 2;
  const auto seq = render_scene(cfg);
  REQUIRE(seq.joints.size() == 5);
  REQUIRE(seq.joints[0].size() == 2);
  // The base sits on the pivot, the tip keeps its distance.
  const double len0 = std::hypot(seq.joints[0][1].row - seq.joints[0][0].row, seq.joints[0][1].col - seq.joints[0][0].col);
  for (const auto& j : seq.joints) {
    CHECK(j[0].row == doctest::Approx(32.0));
    CHECK(j[0].col == doctest::Approx(32.0));
    CHECK(std::hypot(j[1].row - j[0].row, j[1].col - j[0].col) == doctest::Approx(len0));
  }
}

TEST_CASE("shapes leaving the canvas are rejected") {
  CHECK_THROWS_AS(render_scene(one_rect(0, 10, 6)), ConfigError);
  SynthSceneConfig cfg;
  cfg.max_size = 200;
  cfg.min_size = 150;
  CHECK_THROWS_AS(render_scene(cfg), ConfigError);
  cfg = SynthSceneConfig{};
  cfg.frames = 1;
  CHECK_THROWS_AS(render_scene(cfg), ConfigError);
  CHECK_THROWS_AS(parse_shape_kind("hexagon"), ConfigError);
  CHECK(parse_motion_kind("rotation") == MotionKind::Rotation);
}

TEST_CASE("noise texture is deterministic and in range") {
  const auto a = noise_image(16, 16, 5);
  CHECK(a == noise_image(16, 16, 5));
  CHECK(a != noise_image(16, 16, 6));
  for (double v : a.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // Offsets sample the same field.
  const auto shifted = noise_image(16, 16, 5, 0.0, 3.0);
  CHECK(shifted.at(4, 2) == doctest::Approx(a.at(4, 5)));
}

TEST_CASE("training scenes are reproducible") {
  const auto cfg = training_scene_config(7);
  CHECK(cfg.shape_count == 2);
  CHECK(std::abs(cfg.bg_v_row) <= 1.5);
  CHECK(render_scene(cfg).frames == render_scene(training_scene_config(7)).frames);
}
