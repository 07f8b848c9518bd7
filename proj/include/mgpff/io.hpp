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
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mgpff/filter_flow.hpp"
#include "mgpff/grid.hpp"
#include "mgpff/predictor.hpp"
#include "mgpff/synth.hpp"

namespace mgpff {

// PNG (8-bit gray, gray+alpha, RGB, RGBA; alpha dropped) or binary PGM/PPM,
// chosen by magic bytes. Values map linearly to [0, 1].
Image read_image(const std::string& path);
// Format from the extension: .png, .pgm (1 channel) or .ppm (3 channels).
// Values are clamped to [0, 1] and stored as round(255 x).
void write_image(const Image& img, const std::string& path);

// Middlebury .flo: "PIEH", int32 width, int32 height, then (u, v) = (d_col, d_row) float32.
CoordinateFlow read_flo(const std::string& path);
void write_flo(const CoordinateFlow& flow, const std::string& path);

// Filter field container: "MGPF", int32 version, height, width, k, scale, then
// float32 logits in field order. All little-endian.
FilterFlowField read_field(const std::string& path);
void write_field(const FilterFlowField& field, const std::string& path);

// Checkpoint container: "MGPC", int32 version, int32 section count, then per
// section: int32 name length, name bytes, int32 type (0 float32 tensor, 1 int32
// array), int32 rank, int32 dims, payload. The "config" int32 section holds
// the network layout; one float32 section per parameter tensor follows.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

// Label masks as 8-bit gray: object i stored as round(i * 255 / num_objects).
void write_mask(const Image& labels, int num_objects, const std::string& path);
Image read_mask(const std::string& path, int num_objects);

// CSV with header frame,joint_id,row,col,visible.
void write_joints_csv(const std::vector<std::vector<Joint>>& joints, const std::string& path);
std::vector<std::vector<Joint>> read_joints_csv(const std::string& path);

// Lowercase hex SHA-256 of a file's bytes.
std::string file_sha256(const std::string& path);

struct RunManifest {
  std::string command;
  // Resolved options; written as `key = value` lines so the manifest can be
  // passed back through --config.
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::string> outputs;  // relative to the manifest directory
  double duration_s = 0.0;
  std::map<std::string, std::string> checksums;
  // Free-form `# key: value` metadata, e.g. the flow convention.
  std::vector<std::pair<std::string, std::string>> notes;

  // Hashes every entry of `outputs` that exists under `dir`.
  void compute_checksums(const std::string& dir);
};

void write_manifest(const RunManifest& manifest, const std::string& path);
RunManifest read_manifest(const std::string& path);

std::vector<std::string> list_images(const std::string& dir);

}  // namespace mgpff
