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

#include "mgpff/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "mgpff/errors.hpp"

namespace mgpff {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 1 || width < 1 || channels < 1) {
    throw DimensionError("image dimensions must be positive, got " + std::to_string(height) +
                         "x" + std::to_string(width) + "x" + std::to_string(channels));
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Image::Image(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height < 1 || width < 1 || channels < 1) {
    throw DimensionError("image dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DimensionError("image data length does not match " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(channels));
  }
}

double Image::clamped(int row, int col, int ch) const {
  row = std::clamp(row, 0, height_ - 1);
  col = std::clamp(col, 0, width_ - 1);
  return data_[index(row, col, ch)];
}

Image downsample_half(const Image& img) {
  if (img.height() % 2 != 0) {
    throw DimensionError("downsample_half: height " + std::to_string(img.height()) + " is odd");
  }
  if (img.width() % 2 != 0) {
    throw DimensionError("downsample_half: width " + std::to_string(img.width()) + " is odd");
  }
  const int h = img.height() / 2;
  const int w = img.width() / 2;
  const int c = img.channels();
  Image out(h, w, c);
  for (int r = 0; r < h; ++r) {
    for (int q = 0; q < w; ++q) {
      for (int ch = 0; ch < c; ++ch) {
        out.at(r, q, ch) = 0.25 * (img.at(2 * r, 2 * q, ch) + img.at(2 * r, 2 * q + 1, ch) +
                                   img.at(2 * r + 1, 2 * q, ch) + img.at(2 * r + 1, 2 * q + 1, ch));
      }
    }
  }
  return out;
}

Image upsample_nn_2x(const Image& img) {
  const int c = img.channels();
  Image out(img.height() * 2, img.width() * 2, c);
  for (int r = 0; r < out.height(); ++r) {
    for (int q = 0; q < out.width(); ++q) {
      for (int ch = 0; ch < c; ++ch) out.at(r, q, ch) = img.at(r / 2, q / 2, ch);
    }
  }
  return out;
}

PatchMatrix im2col(const Image& img, int k) {
  if (k < 1 || k % 2 == 0) {
    throw ParameterError("im2col: kernel size must be odd and positive, got " + std::to_string(k));
  }
  const int radius = k / 2;
  const int kk = k * k;
  const int c = img.channels();
  PatchMatrix m;
  m.rows = static_cast<int>(img.pixels());
  m.cols = kk * c;
  m.data.resize(static_cast<std::size_t>(m.rows) * m.cols);
  std::size_t at = 0;
  for (int r = 0; r < img.height(); ++r) {
    for (int q = 0; q < img.width(); ++q) {
      for (int ch = 0; ch < c; ++ch) {
        for (int dy = -radius; dy <= radius; ++dy) {
          for (int dx = -radius; dx <= radius; ++dx) m.data[at++] = img.clamped(r + dy, q + dx, ch);
        }
      }
    }
  }
  return m;
}

std::pair<Image, CropRecord> pad_to_multiple(const Image& img, int m) {
  if (m < 1) throw ParameterError("pad_to_multiple: multiple must be >= 1");
  CropRecord rec;
  rec.height = img.height();
  rec.width = img.width();
  rec.pad_bottom = (m - img.height() % m) % m;
  rec.pad_right = (m - img.width() % m) % m;
  if (rec.empty()) return {img, rec};
  Image out(img.height() + rec.pad_bottom, img.width() + rec.pad_right, img.channels());
  for (int r = 0; r < out.height(); ++r) {
    for (int q = 0; q < out.width(); ++q) {
      for (int ch = 0; ch < img.channels(); ++ch) out.at(r, q, ch) = img.clamped(r, q, ch);
    }
  }
  return {std::move(out), rec};
}

Image crop(const Image& img, int height, int width) {
  if (height > img.height() || width > img.width()) {
    throw DimensionError("crop: target larger than image");
  }
  if (height == img.height() && width == img.width()) return img;
  Image out(height, width, img.channels());
  for (int r = 0; r < height; ++r) {
    for (int q = 0; q < width; ++q) {
      for (int ch = 0; ch < img.channels(); ++ch) out.at(r, q, ch) = img.at(r, q, ch);
    }
  }
  return out;
}

Image crop(const Image& img, const CropRecord& record) {
  return crop(img, record.height, record.width);
}

std::vector<Image> build_pyramid(const Image& img, int levels) {
  if (levels < 1) throw ParameterError("build_pyramid: levels must be >= 1");
  const int factor = 1 << (levels - 1);
  if (img.height() % factor != 0 || img.width() % factor != 0) {
    throw DimensionError("build_pyramid: " + std::to_string(img.height()) + "x" +
                         std::to_string(img.width()) + " is not divisible by " +
                         std::to_string(factor) + "; pad first");
  }
  std::vector<Image> pyramid;
  pyramid.reserve(levels);
  pyramid.push_back(img);
  for (int l = 1; l < levels; ++l) pyramid.push_back(downsample_half(pyramid.back()));
  return pyramid;
}

Image to_gray(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.height(), img.width(), 1);
  const double inv = 1.0 / img.channels();
  for (int r = 0; r < img.height(); ++r) {
    for (int q = 0; q < img.width(); ++q) {
      double s = 0.0;
      for (int ch = 0; ch < img.channels(); ++ch) s += img.at(r, q, ch);
      out.at(r, q) = s * inv;
    }
  }
  return out;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mgpff
