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

namespace mgpff {

// Dense H x W x C grid, row-major with interleaved channels:
// index(row, col, ch) = (row * width + col) * channels + ch.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);
  Image(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int row, int col, int ch = 0) { return data_[index(row, col, ch)]; }
  double at(int row, int col, int ch = 0) const { return data_[index(row, col, ch)]; }

  // Replicate (clamp-to-edge) read.
  double clamped(int row, int col, int ch = 0) const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }

  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  bool operator==(const Image&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// One row per output pixel; k*k*channels columns, channel-major within a row
// (column = ch * k * k + offset index, offsets enumerated row-major from (-r,-r)).
struct PatchMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  double at(int row, int col) const { return data[static_cast<std::size_t>(row) * cols + col]; }
};

struct CropRecord {
  int height = 0;  // original size
  int width = 0;
  int pad_bottom = 0;
  int pad_right = 0;

  bool empty() const { return pad_bottom == 0 && pad_right == 0; }
};

Image downsample_half(const Image& img);
Image upsample_nn_2x(const Image& img);
PatchMatrix im2col(const Image& img, int k);

std::pair<Image, CropRecord> pad_to_multiple(const Image& img, int m);
Image crop(const Image& img, const CropRecord& record);
// Crops to the top-left height x width region.
Image crop(const Image& img, int height, int width);

// Level 0 is full resolution; level l has been halved l times.
std::vector<Image> build_pyramid(const Image& img, int levels);

// Grayscale average of all channels.
Image to_gray(const Image& img);

bool all_finite(std::span<const double> values);

}  // namespace mgpff
