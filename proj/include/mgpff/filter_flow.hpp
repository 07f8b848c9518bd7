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
#include <span>
#include <vector>

#include "mgpff/grid.hpp"

namespace mgpff {

// Per-pixel k x k kernel logits at one pyramid scale. Offsets within a kernel
// are enumerated row-major from (-r, -r) to (r, r), r = (k - 1) / 2.
class FilterFlowField {
 public:
  FilterFlowField() = default;
  // Zero logits (uniform kernels).
  FilterFlowField(int height, int width, int k, int scale_index = 1);
  FilterFlowField(int height, int width, int k, int scale_index, std::vector<double> logits);

  // Every pixel holds a point mass at (d_row, d_col).
  static FilterFlowField delta(int height, int width, int k, int d_row, int d_col,
                               double peak = 1000.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int k() const { return k_; }
  int radius() const { return k_ / 2; }
  int taps() const { return k_ * k_; }
  int scale_index() const { return scale_index_; }
  void set_scale_index(int s) { scale_index_ = s; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }

  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }
  double& logit(std::size_t pixel, int tap) { return logits_[pixel * taps() + tap]; }
  double logit(std::size_t pixel, int tap) const { return logits_[pixel * taps() + tap]; }

  // Softmax per pixel, same layout as logits.
  std::vector<double> probabilities() const;

  // Tap index of offset (d_row, d_col).
  int tap(int d_row, int d_col) const { return (d_row + radius()) * k_ + (d_col + radius()); }
  int tap_row(int tap) const { return tap / k_ - radius(); }
  int tap_col(int tap) const { return tap % k_ - radius(); }

  bool operator==(const FilterFlowField&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int k_ = 1;
  int scale_index_ = 1;
  std::vector<double> logits_;
};

// Pull-convention displacement field: target pixel p samples the source at
// p + d(p). Stored interleaved as (d_row, d_col) per pixel.
class CoordinateFlow {
 public:
  CoordinateFlow() = default;
  CoordinateFlow(int height, int width, double d_row = 0.0, double d_col = 0.0);
  CoordinateFlow(int height, int width, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }

  double& d_row(int row, int col) { return data_[2 * idx(row, col)]; }
  double& d_col(int row, int col) { return data_[2 * idx(row, col) + 1]; }
  double d_row(int row, int col) const { return data_[2 * idx(row, col)]; }
  double d_col(int row, int col) const { return data_[2 * idx(row, col) + 1]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const CoordinateFlow& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }
  bool operator==(const CoordinateFlow&) const = default;

 private:
  std::size_t idx(int row, int col) const { return static_cast<std::size_t>(row) * width_ + col; }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Per-pixel max-subtracted softmax of the logits. Throws NumericError on
// non-finite logits.
std::vector<double> softmax_filters(const FilterFlowField& field);

// output(p) = sum_o P(p, o) * src(clamp(p + o)), the same kernel for every channel.
Image apply_filter_flow(const FilterFlowField& field, const Image& src);
// Same operator given precomputed probabilities.
Image apply_filter_flow(std::span<const double> probs, int k, const Image& src);

// Expected offset under the per-pixel kernel distribution.
CoordinateFlow filters_to_flow(const FilterFlowField& field);
CoordinateFlow filters_to_flow(std::span<const double> probs, int height, int width, int k);

// Corner indices and weights of a bilinear sample whose coordinates are
// clamped to [0, H-1] x [0, W-1]. `row_free`/`col_free` are false when the
// coordinate was clamped, in which case the sample does not vary with it.
struct BilinearTap {
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;
  double fy = 0.0, fx = 0.0;
  bool row_free = true;
  bool col_free = true;

  template <class Fn>
  double blend(Fn&& value) const {
    return (1.0 - fy) * ((1.0 - fx) * value(r0, c0) + fx * value(r0, c1)) +
           fy * ((1.0 - fx) * value(r1, c0) + fx * value(r1, c1));
  }
  // Partial derivatives of the blended value w.r.t. the sample row and column.
  template <class Fn>
  double d_row(Fn&& value) const {
    if (!row_free) return 0.0;
    return (1.0 - fx) * (value(r1, c0) - value(r0, c0)) + fx * (value(r1, c1) - value(r0, c1));
  }
  template <class Fn>
  double d_col(Fn&& value) const {
    if (!col_free) return 0.0;
    return (1.0 - fy) * (value(r0, c1) - value(r0, c0)) + fy * (value(r1, c1) - value(r1, c0));
  }
};

BilinearTap bilinear_tap(int height, int width, double row, double col);

double sample_bilinear(const Image& img, double row, double col, int ch);

Image warp_with_flow(const Image& src, const CoordinateFlow& flow);

// result(p) = g(p) + h(p + g(p)); warping by the result approximates warping
// by h then by g.
CoordinateFlow compose_flows(const CoordinateFlow& g, const CoordinateFlow& h);

CoordinateFlow upscale_flow_2x(const CoordinateFlow& flow);

CoordinateFlow crop(const CoordinateFlow& flow, int height, int width);

// Mean endpoint error over the pixels selected by `mask` (all pixels when empty).
double endpoint_error(const CoordinateFlow& estimate, const CoordinateFlow& truth,
                      std::span<const unsigned char> mask = {});

}  // namespace mgpff
