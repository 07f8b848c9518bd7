#include <cmath>

#include "doctest.h"
#include "mgpff/errors.hpp"
#include "mgpff/filter_flow.hpp"
#include "test_util.hpp"

using namespace mgpff;
using mgpff::testing::random_field;
using mgpff::testing::random_image;

TEST_CASE("softmax_filters") {
  FilterFlowField zero(2, 2, 3);
  for (double p : softmax_filters(zero)) CHECK(p == doctest::Approx(1.0 / 9.0));

  auto peak = FilterFlowField::delta(2, 2, 3, 0, 0, 1000.0);
  auto probs = softmax_filters(peak);
  for (std::size_t p = 0; p < 4; ++p) {
    for (int t = 0; t < 9; ++t) {
      if (t == 4) {
        CHECK(std::abs(probs[p * 9 + t] - 1.0) < 1e-9);
      } else {
        CHECK(probs[p * 9 + t] < 1e-9);
      }
    }
  }

  FilterFlowField logs(1, 1, 3);
  for (int t = 0; t < 9; ++t) logs.logit(0, t) = std::log(t + 1.0);
  probs = softmax_filters(logs);
  for (int t = 0; t < 9; ++t) CHECK(probs[t] == doctest::Approx((t + 1.0) / 45.0).epsilon(1e-12));

  FilterFlowField bad(1, 1, 3);
  bad.logit(0, 2) = std::nan("");
  CHECK_THROWS_AS(softmax_filters(bad), NumericError);
}

TEST_CASE("softmax simplex invariant on random logits") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto field = random_field(5, 4, 5, seed, 10.0);
    auto probs = softmax_filters(field);
    for (std::size_t p = 0; p < field.pixels(); ++p) {
      double sum = 0.0;
      for (int t = 0; t < 25; ++t) {
        CHECK(probs[p * 25 + t] >= 0.0);
        CHECK(probs[p * 25 + t] <= 1.0);
        sum += probs[p * 25 + t];
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("apply_filter_flow") {
  auto src = random_image(7, 9, 3, 4);
  SUBCASE("center delta is the identity") {
    auto out = apply_filter_flow(FilterFlowField::delta(7, 9, 5, 0, 0), src);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out.data()[i] - src.data()[i]) < 1e-12);
  }
  SUBCASE("delta at (0,+1) shifts left with a replicated border column") {
    auto out = apply_filter_flow(FilterFlowField::delta(7, 9, 3, 0, 1), src);
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 9; ++c)
        for (int ch = 0; ch < 3; ++ch)
          CHECK(out.at(r, c, ch) == doctest::Approx(src.at(r, std::min(c + 1, 8), ch)));
  }
  SUBCASE("uniform k=3 is a 3x3 box filter") {
    auto out = apply_filter_flow(FilterFlowField(7, 9, 3), src);
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 9; ++c)
        for (int ch = 0; ch < 3; ++ch) {
          double box = 0.0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
              box += src.at(std::clamp(r + dy, 0, 6), std::clamp(c + dx, 0, 8), ch);
          CHECK(out.at(r, c, ch) == doctest::Approx(box / 9.0).epsilon(1e-12));
        }
  }
  SUBCASE("matches the im2col inner product") {
    auto field = random_field(7, 9, 3, 8);
    auto probs = softmax_filters(field);
    auto patches = im2col(src, 3);
    auto out = apply_filter_flow(field, src);
    for (int p = 0; p < patches.rows; ++p)
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int t = 0; t < 9; ++t) acc += probs[p * 9 + t] * patches.at(p, ch * 9 + t);
        CHECK(out.data()[p * 3 + ch] == doctest::Approx(acc).epsilon(1e-12));
      }
  }
  CHECK_THROWS_AS(apply_filter_flow(FilterFlowField(7, 8, 3), src), DimensionError);
}

TEST_CASE("apply_filter_flow is linear and preserves constants") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto field = random_field(6, 6, 5, seed, 3.0);
    auto x = random_image(6, 6, 2, seed + 100);
    auto y = random_image(6, 6, 2, seed + 200);
    const double a = 0.7;
    const double b = -1.3;
    Image mix(6, 6, 2);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.storage()[i] = a * x.data()[i] + b * y.data()[i];
    auto lhs = apply_filter_flow(field, mix);
    auto tx = apply_filter_flow(field, x);
    auto ty = apply_filter_flow(field, y);
    for (std::size_t i = 0; i < lhs.size(); ++i)
      CHECK(std::abs(lhs.data()[i] - (a * tx.data()[i] + b * ty.data()[i])) < 1e-6);

    auto flat = apply_filter_flow(field, Image(6, 6, 1, 0.42));
    for (double v : flat.data()) CHECK(std::abs(v - 0.42) < 1e-6);
  }
}

TEST_CASE("filters_to_flow") {
  auto center = filters_to_flow(FilterFlowField::delta(3, 4, 5, 0, 0));
  for (double v : center.data()) CHECK(std::abs(v) < 1e-12);

  auto off = filters_to_flow(FilterFlowField::delta(3, 4, 5, 2, -1));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) {
      CHECK(off.d_row(r, c) == doctest::Approx(2.0));
      CHECK(off.d_col(r, c) == doctest::Approx(-1.0));
    }

  auto uniform = filters_to_flow(FilterFlowField(3, 4, 7));
  for (double v : uniform.data()) CHECK(std::abs(v) < 1e-12);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto flow = filters_to_flow(random_field(5, 5, 7, seed, 20.0));
    for (double v : flow.data()) CHECK(std::abs(v) <= 3.0 + 1e-12);
  }
}

TEST_CASE("warp_with_flow") {
  auto src = mgpff::testing::ramp_image(10, 10);
  CHECK(warp_with_flow(src, CoordinateFlow(10, 10)) == src);

  auto shifted = warp_with_flow(src, CoordinateFlow(10, 10, 0.0, 3.0));
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c + 3 < 10; ++c) CHECK(shifted.at(r, c) == doctest::Approx(src.at(r, c + 3)));

  Image two(1, 2, 1, std::vector<double>{0.0, 1.0});
  auto half = warp_with_flow(two, CoordinateFlow(1, 2, 0.0, 0.5));
  CHECK(half.at(0, 0) == doctest::Approx(0.5));
  // Past the right border the sample clamps.
  CHECK(half.at(0, 1) == doctest::Approx(1.0));

  CHECK_THROWS_AS(warp_with_flow(src, CoordinateFlow(9, 10)), DimensionError);
}

TEST_CASE("delta filters agree with integer warps on the interior") {
  auto src = random_image(12, 12, 1, 77);
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) {
      auto a = apply_filter_flow(FilterFlowField::delta(12, 12, 5, dy, dx), src);
      auto b = warp_with_flow(src, CoordinateFlow(12, 12, dy, dx));
      for (int r = 2; r < 10; ++r)
        for (int c = 2; c < 10; ++c) CHECK(a.at(r, c) == doctest::Approx(b.at(r, c)).epsilon(1e-12));
    }
}

TEST_CASE("compose_flows") {
  auto h = mgpff::testing::random_flow(8, 8, 2.0, 3);
  auto zero = CoordinateFlow(8, 8);
  CHECK(compose_flows(zero, h) == h);
  CHECK(compose_flows(h, zero) == h);

  auto c = compose_flows(CoordinateFlow(8, 8, 1.0, 0.0), CoordinateFlow(8, 8, 0.0, 2.0));
  for (int r = 0; r < 8; ++r)
    for (int q = 0; q < 8; ++q) {
      CHECK(c.d_row(r, q) == doctest::Approx(1.0));
      CHECK(c.d_col(r, q) == doctest::Approx(2.0));
    }
  CHECK_THROWS_AS(compose_flows(zero, CoordinateFlow(8, 7)), DimensionError);
}

TEST_CASE("double warp matches a single warp by the composed flow") {
  // Affine image and affine h make bilinear sampling exact, so the two routes
  // must agree wherever no coordinate is clamped.
  const int n = 16;
  Image x(n, n, 1);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) x.at(r, c) = 0.03 * r - 0.02 * c + 0.5;
  CoordinateFlow h(n, n);
  CoordinateFlow g(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      h.d_row(r, c) = 0.5 + 0.05 * r - 0.03 * c;
      h.d_col(r, c) = -0.7 + 0.02 * r + 0.04 * c;
      g.d_row(r, c) = 1.3 * std::sin(0.3 * r + 0.2 * c);
      g.d_col(r, c) = 1.1 * std::cos(0.25 * r - 0.15 * c);
    }
  auto twice = warp_with_flow(warp_with_flow(x, h), g);
  auto once = warp_with_flow(x, compose_flows(g, h));
  for (int r = 4; r < n - 4; ++r)
    for (int c = 4; c < n - 4; ++c) CHECK(std::abs(twice.at(r, c) - once.at(r, c)) < 1e-6);
}

TEST_CASE("upscale_flow_2x") {
  auto up = upscale_flow_2x(CoordinateFlow(1, 1, 1.0, -0.5));
  CHECK(up.height() == 2);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      CHECK(up.d_row(r, c) == 2.0);
      CHECK(up.d_col(r, c) == -1.0);
    }
  auto z = upscale_flow_2x(CoordinateFlow(3, 2));
  CHECK(z == CoordinateFlow(6, 4));

  // A coarse delta at (3,0) becomes a 6-row shift at full resolution.
  auto fine = random_image(16, 16, 1, 12);
  auto coarse_flow = filters_to_flow(FilterFlowField::delta(8, 8, 7, 3, 0));
  auto fine_flow = upscale_flow_2x(coarse_flow);
  auto warped = warp_with_flow(fine, fine_flow);
  for (int r = 0; r + 6 < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      CHECK(fine_flow.d_row(r, c) == doctest::Approx(6.0));
      CHECK(warped.at(r, c) == doctest::Approx(fine.at(r + 6, c)));
    }
}
