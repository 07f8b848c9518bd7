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

#include "mgpff/filter_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "mgpff/errors.hpp"

namespace mgpff {

namespace {

void check_kernel(int k) {
  if (k < 1 || k % 2 == 0) {
    throw ParameterError("kernel size must be odd and positive, got " + std::to_string(k));
  }
}

std::string dims(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

}  // namespace

FilterFlowField::FilterFlowField(int height, int width, int k, int scale_index)
    : height_(height), width_(width), k_(k), scale_index_(scale_index) {
  check_kernel(k);
  if (height < 1 || width < 1) throw DimensionError("filter field dimensions must be positive");
  logits_.assign(pixels() * taps(), 0.0);
}

FilterFlowField::FilterFlowField(int height, int width, int k, int scale_index,
                                 std::vector<double> logits)
    : height_(height), width_(width), k_(k), scale_index_(scale_index), logits_(std::move(logits)) {
  check_kernel(k);
  if (height < 1 || width < 1) throw DimensionError("filter field dimensions must be positive");
  if (logits_.size() != pixels() * taps()) {
    throw DimensionError("filter field logits length does not match " + dims(height, width) +
                         "x" + std::to_string(k * k));
  }
}

FilterFlowField FilterFlowField::delta(int height, int width, int k, int d_row, int d_col,
                                       double peak) {
  FilterFlowField f(height, width, k);
  const int r = f.radius();
  if (std::abs(d_row) > r || std::abs(d_col) > r) {
    throw ParameterError("delta offset outside the kernel window");
  }
  const int t = f.tap(d_row, d_col);
  for (std::size_t p = 0; p < f.pixels(); ++p) f.logit(p, t) = peak;
  return f;
}

std::vector<double> FilterFlowField::probabilities() const { return softmax_filters(*this); }

std::vector<double> softmax_filters(const FilterFlowField& field) {
  const int taps = field.taps();
  auto logits = field.logits();
  std::vector<double> probs(logits.size());
  for (std::size_t p = 0; p < field.pixels(); ++p) {
    const double* z = logits.data() + p * taps;
    double* w = probs.data() + p * taps;
    double zmax = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < taps; ++t) {
      if (!std::isfinite(z[t])) throw NumericError("softmax_filters: non-finite logit");
      zmax = std::max(zmax, z[t]);
    }
    double sum = 0.0;
    for (int t = 0; t < taps; ++t) {
      w[t] = std::exp(z[t] - zmax);
      sum += w[t];
    }
    const double inv = 1.0 / sum;
    for (int t = 0; t < taps; ++t) w[t] *= inv;
  }
  return probs;
}

Image apply_filter_flow(std::span<const double> probs, int k, const Image& src) {
  const int taps = k * k;
  if (probs.size() != src.pixels() * taps) {
    throw DimensionError("apply_filter_flow: filter field does not match source size " +
                         dims(src.height(), src.width()));
  }
  const int r = k / 2;
  const int c = src.channels();
  Image out(src.height(), src.width(), c);
  // Row of the patch matrix for the current pixel, channel-major.
  std::vector<double> patch(static_cast<std::size_t>(taps) * c);
  std::size_t p = 0;
  for (int row = 0; row < src.height(); ++row) {
    for (int col = 0; col < src.width(); ++col, ++p) {
      std::size_t at = 0;
      for (int ch = 0; ch < c; ++ch) {
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) patch[at++] = src.clamped(row + dy, col + dx, ch);
        }
      }
      const double* w = probs.data() + p * taps;
      for (int ch = 0; ch < c; ++ch) {
        const double* x = patch.data() + static_cast<std::size_t>(ch) * taps;
        double acc = 0.0;
        for (int t = 0; t < taps; ++t) acc += w[t] * x[t];
        out.at(row, col, ch) = acc;
      }
    }
  }
  return out;
}

Image apply_filter_flow(const FilterFlowField& field, const Image& src) {
  if (field.height() != src.height() || field.width() != src.width()) {
    throw DimensionError("apply_filter_flow: field " + dims(field.height(), field.width()) +
                         " vs source " + dims(src.height(), src.width()));
  }
  const auto probs = softmax_filters(field);
  return apply_filter_flow(probs, field.k(), src);
}

CoordinateFlow filters_to_flow(std::span<const double> probs, int height, int width, int k) {
  const int taps = k * k;
  const int r = k / 2;
  if (probs.size() != static_cast<std::size_t>(height) * width * taps) {
    throw DimensionError("filters_to_flow: probability length mismatch");
  }
  CoordinateFlow flow(height, width);
  auto out = flow.data();
  for (std::size_t p = 0; p < static_cast<std::size_t>(height) * width; ++p) {
    const double* w = probs.data() + p * taps;
    double dr = 0.0;
    double dc = 0.0;
    for (int t = 0; t < taps; ++t) {
      dr += w[t] * (t / k - r);
      dc += w[t] * (t % k - r);
    }
    out[2 * p] = dr;
    out[2 * p + 1] = dc;
  }
  return flow;
}

CoordinateFlow filters_to_flow(const FilterFlowField& field) {
  const auto probs = softmax_filters(field);
  return filters_to_flow(probs, field.height(), field.width(), field.k());
}

CoordinateFlow::CoordinateFlow(int height, int width, double d_row, double d_col)
    : height_(height), width_(width) {
  if (height < 1 || width < 1) throw DimensionError("flow dimensions must be positive");
  data_.resize(2 * pixels());
  for (std::size_t p = 0; p < pixels(); ++p) {
    data_[2 * p] = d_row;
    data_[2 * p + 1] = d_col;
  }
}

CoordinateFlow::CoordinateFlow(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 1 || width < 1) throw DimensionError("flow dimensions must be positive");
  if (data_.size() != 2 * pixels()) throw DimensionError("flow data length mismatch");
}

BilinearTap bilinear_tap(int height, int width, double row, double col) {
  BilinearTap tap;
  if (!(row >= 0.0)) {
    row = 0.0;
    tap.row_free = false;
  } else if (row > height - 1) {
    row = height - 1;
    tap.row_free = false;
  }
  if (!(col >= 0.0)) {
    col = 0.0;
    tap.col_free = false;
  } else if (col > width - 1) {
    col = width - 1;
    tap.col_free = false;
  }
  tap.r0 = std::min(static_cast<int>(std::floor(row)), height - 1);
  tap.c0 = std::min(static_cast<int>(std::floor(col)), width - 1);
  tap.r1 = std::min(tap.r0 + 1, height - 1);
  tap.c1 = std::min(tap.c0 + 1, width - 1);
  tap.fy = row - tap.r0;
  tap.fx = col - tap.c0;
  return tap;
}

double sample_bilinear(const Image& img, double row, double col, int ch) {
  const auto tap = bilinear_tap(img.height(), img.width(), row, col);
  return tap.blend([&](int r, int c) { return img.at(r, c, ch); });
}

Image warp_with_flow(const Image& src, const CoordinateFlow& flow) {
  if (src.height() != flow.height() || src.width() != flow.width()) {
    throw DimensionError("warp_with_flow: source " + dims(src.height(), src.width()) +
                         " vs flow " + dims(flow.height(), flow.width()));
  }
  Image out(src.height(), src.width(), src.channels());
  for (int row = 0; row < src.height(); ++row) {
    for (int col = 0; col < src.width(); ++col) {
      const auto tap = bilinear_tap(src.height(), src.width(), row + flow.d_row(row, col),
                                    col + flow.d_col(row, col));
      for (int ch = 0; ch < src.channels(); ++ch) {
        out.at(row, col, ch) = tap.blend([&](int r, int c) { return src.at(r, c, ch); });
      }
    }
  }
  return out;
}

CoordinateFlow compose_flows(const CoordinateFlow& g, const CoordinateFlow& h) {
  if (!g.same_shape(h)) {
    throw DimensionError("compose_flows: " + dims(g.height(), g.width()) + " vs " +
                         dims(h.height(), h.width()));
  }
  CoordinateFlow out(g.height(), g.width());
  for (int row = 0; row < g.height(); ++row) {
    for (int col = 0; col < g.width(); ++col) {
      const double gr = g.d_row(row, col);
      const double gc = g.d_col(row, col);
      const auto tap = bilinear_tap(h.height(), h.width(), row + gr, col + gc);
      out.d_row(row, col) = gr + tap.blend([&](int r, int c) { return h.d_row(r, c); });
      out.d_col(row, col) = gc + tap.blend([&](int r, int c) { return h.d_col(r, c); });
    }
  }
  return out;
}

CoordinateFlow upscale_flow_2x(const CoordinateFlow& flow) {
  CoordinateFlow out(flow.height() * 2, flow.width() * 2);
  for (int row = 0; row < out.height(); ++row) {
    for (int col = 0; col < out.width(); ++col) {
      out.d_row(row, col) = 2.0 * flow.d_row(row / 2, col / 2);
      out.d_col(row, col) = 2.0 * flow.d_col(row / 2, col / 2);
    }
  }
  return out;
}

CoordinateFlow crop(const CoordinateFlow& flow, int height, int width) {
  if (height > flow.height() || width > flow.width()) {
    throw DimensionError("crop: target larger than flow");
  }
  if (height == flow.height() && width == flow.width()) return flow;
  CoordinateFlow out(height, width);
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      out.d_row(row, col) = flow.d_row(row, col);
      out.d_col(row, col) = flow.d_col(row, col);
    }
  }
  return out;
}

double endpoint_error(const CoordinateFlow& estimate, const CoordinateFlow& truth,
                      std::span<const unsigned char> mask) {
  if (!estimate.same_shape(truth)) throw DimensionError("endpoint_error: flow size mismatch");
  if (!mask.empty() && mask.size() != estimate.pixels()) {
    throw DimensionError("endpoint_error: mask size mismatch");
  }
  double sum = 0.0;
  std::size_t n = 0;
  auto a = estimate.data();
  auto b = truth.data();
  for (std::size_t p = 0; p < estimate.pixels(); ++p) {
    if (!mask.empty() && !mask[p]) continue;
    sum += std::hypot(a[2 * p] - b[2 * p], a[2 * p + 1] - b[2 * p + 1]);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace mgpff
