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

#include "mgpff/io.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mgpff/errors.hpp"

namespace mgpff {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr std::int32_t kFieldVersion = 1;
constexpr std::int32_t kCheckpointVersion = 1;

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

class Writer {
 public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void f32(float v) { raw(&v, 4); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::vector<unsigned char> bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  void raw(void* p, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("'" + path_ + "' is truncated");
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::int32_t i32() {
    std::int32_t v;
    raw(&v, 4);
    return v;
  }
  float f32() {
    float v;
    raw(&v, 4);
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& path() const { return path_; }

 private:
  std::vector<unsigned char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

std::string lower_ext(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

Image read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError("cannot decode PNG '" + path + "': " + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw FormatError("'" + path + "': unsupported bit depth 16 (8-bit PNG only)");
  }
  const bool color = image.format & PNG_FORMAT_FLAG_COLOR;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG '" + path + "': " + msg);
  }
  Image img(static_cast<int>(image.height), static_cast<int>(image.width), channels);
  for (std::size_t i = 0; i < buf.size(); ++i) img.storage()[i] = buf[i] / 255.0;
  return img;
}

void write_png(const Image& img, const std::string& path) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw DimensionError("PNG output needs 1 or 3 channels, got " + std::to_string(img.channels()));
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(img.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = quantize(img.data()[i]);
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path + "': " + image.message);
  }
}

// Binary PGM (P5) or PPM (P6).
Image read_pnm(const std::vector<unsigned char>& bytes, const std::string& path) {
  std::size_t pos = 2;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    if (t.empty() || !std::all_of(t.begin(), t.end(), ::isdigit)) {
      throw FormatError("'" + path + "': malformed PNM header");
    }
    return std::stoi(t);
  };
  const int channels = bytes[1] == '6' ? 3 : 1;
  const int w = token(), h = token(), maxval = token();
  ++pos;  // single whitespace before the raster
  if (w < 1 || h < 1) throw FormatError("'" + path + "': bad dimensions");
  if (maxval > 255) throw FormatError("'" + path + "': unsupported bit depth (maxval " + std::to_string(maxval) + ")");
  if (maxval < 1) throw FormatError("'" + path + "': bad maxval");
  const std::size_t n = static_cast<std::size_t>(w) * h * channels;
  if (pos + n > bytes.size()) throw FormatError("'" + path + "' is truncated");
  Image img(h, w, channels);
  for (std::size_t i = 0; i < n; ++i) img.storage()[i] = bytes[pos + i] / static_cast<double>(maxval);
  return img;
}

void check_flow_dims(std::int32_t w, std::int32_t h, const std::string& path) {
  if (w < 1 || h < 1 || static_cast<std::int64_t>(w) * h > (std::int64_t{1} << 30)) {
    throw FormatError("'" + path + "': invalid size " + std::to_string(w) + "x" + std::to_string(h));
  }
}

std::pair<std::int32_t, std::int32_t> split(std::uint64_t v) {
  return {static_cast<std::int32_t>(v & 0xffffffffu), static_cast<std::int32_t>(v >> 32)};
}

std::uint64_t join(std::int32_t lo, std::int32_t hi) {
  return static_cast<std::uint64_t>(static_cast<std::uint32_t>(lo)) |
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(hi)) << 32);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string quote_if_needed(const std::string& v) {
  const bool plain = !v.empty() && v.find_first_of(" \t\"'#=[],") == std::string::npos;
  if (plain) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string unquote(const std::string& v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') return v;
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] == '\\' && i + 2 < v.size()) ++i;
    out += v[i];
  }
  return out;
}

}  // namespace

Image read_image(const std::string& path) {
  const auto bytes = read_bytes(path);
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return read_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return read_pnm(bytes, path);
  }
  throw FormatError("'" + path + "': unknown image format (expected PNG, P5 or P6)");
}

void write_image(const Image& img, const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") return write_png(img, path);
  if (ext == ".pgm" || ext == ".ppm") {
    const int want = ext == ".pgm" ? 1 : 3;
    if (img.channels() != want) {
      throw DimensionError(ext + " output needs " + std::to_string(want) + " channel(s), got " +
                           std::to_string(img.channels()));
    }
    std::string out = (want == 1 ? "P5\n" : "P6\n") + std::to_string(img.width()) + " " +
                      std::to_string(img.height()) + "\n255\n";
    for (double v : img.data()) out += static_cast<char>(quantize(v));
    return write_bytes(path, out);
  }
  throw IoError("'" + path + "': unsupported image extension (use .png, .pgm or .ppm)");
}

CoordinateFlow read_flo(const std::string& path) {
  Reader in(read_bytes(path), path);
  if (in.remaining() < 12 || in.str(4) != "PIEH") throw FormatError("'" + path + "': not a .flo file");
  const std::int32_t w = in.i32(), h = in.i32();
  check_flow_dims(w, h, path);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (in.remaining() != n * 8) {
    throw FormatError("'" + path + "': payload size does not match " + std::to_string(w) + "x" +
                      std::to_string(h));
  }
  CoordinateFlow flow(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      flow.d_col(r, c) = in.f32();
      flow.d_row(r, c) = in.f32();
    }
  return flow;
}

void write_flo(const CoordinateFlow& flow, const std::string& path) {
  Writer out;
  out.raw("PIEH", 4);
  out.i32(flow.width());
  out.i32(flow.height());
  for (int r = 0; r < flow.height(); ++r)
    for (int c = 0; c < flow.width(); ++c) {
      out.f32(static_cast<float>(flow.d_col(r, c)));
      out.f32(static_cast<float>(flow.d_row(r, c)));
    }
  write_bytes(path, out.bytes());
}

FilterFlowField read_field(const std::string& path) {
  Reader in(read_bytes(path), path);
  if (in.remaining() < 4 || in.str(4) != "MGPF") throw FormatError("'" + path + "': not a filter field file");
  const std::int32_t version = in.i32();
  if (version != kFieldVersion) {
    throw FormatError("'" + path + "': unsupported field version " + std::to_string(version));
  }
  const std::int32_t h = in.i32(), w = in.i32(), k = in.i32(), scale = in.i32();
  check_flow_dims(w, h, path);
  if (k < 1 || k % 2 == 0 || k > 255) throw FormatError("'" + path + "': invalid kernel size");
  const std::size_t n = static_cast<std::size_t>(h) * w * k * k;
  if (in.remaining() != n * 4) throw FormatError("'" + path + "': payload size mismatch");
  std::vector<double> logits(n);
  for (auto& v : logits) v = in.f32();
  return FilterFlowField(h, w, k, scale, std::move(logits));
}

void write_field(const FilterFlowField& field, const std::string& path) {
  Writer out;
  out.raw("MGPF", 4);
  out.i32(kFieldVersion);
  out.i32(field.height());
  out.i32(field.width());
  out.i32(field.k());
  out.i32(field.scale_index());
  for (double v : field.logits()) out.f32(static_cast<float>(v));
  write_bytes(path, out.bytes());
}

void save_checkpoint(const Model& model, const std::string& path) {
  const auto& cfg = model.config;
  std::vector<std::int32_t> conf{cfg.in_channels, cfg.k, cfg.full_res_channels};
  for (std::uint64_t bits : {cfg.seed, std::bit_cast<std::uint64_t>(cfg.input_scale),
                             std::bit_cast<std::uint64_t>(cfg.out_gain)}) {
    auto [lo, hi] = split(bits);
    conf.push_back(lo);
    conf.push_back(hi);
  }
  conf.push_back(static_cast<std::int32_t>(cfg.embed_channels.size()));
  conf.insert(conf.end(), cfg.embed_channels.begin(), cfg.embed_channels.end());
  conf.push_back(static_cast<std::int32_t>(cfg.head_channels.size()));
  conf.insert(conf.end(), cfg.head_channels.begin(), cfg.head_channels.end());

  Writer out;
  out.raw("MGPC", 4);
  out.i32(kCheckpointVersion);
  out.i32(static_cast<std::int32_t>(1 + model.params.size()));
  auto header = [&](const std::string& name, std::int32_t type, const std::vector<int>& dims) {
    out.i32(static_cast<std::int32_t>(name.size()));
    out.raw(name.data(), name.size());
    out.i32(type);
    out.i32(static_cast<std::int32_t>(dims.size()));
    for (int d : dims) out.i32(d);
  };
  header("config", 1, {static_cast<int>(conf.size())});
  for (auto v : conf) out.i32(v);
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto& t = model.params.tensors[i];
    header(model.params.names[i], 0, t.shape);
    for (float v : t.data) out.f32(v);
  }
  write_bytes(path, out.bytes());
}

Model load_checkpoint(const std::string& path) {
  Reader in(read_bytes(path), path);
  if (in.remaining() < 4 || in.str(4) != "MGPC") throw FormatError("'" + path + "': not a checkpoint");
  const std::int32_t version = in.i32();
  if (version != kCheckpointVersion) {
    throw FormatError("'" + path + "': unsupported checkpoint version " + std::to_string(version));
  }
  const std::int32_t sections = in.i32();
  if (sections < 1 || sections > 4096) throw FormatError("'" + path + "': bad section count");
  Model model;
  bool have_config = false;
  for (std::int32_t s = 0; s < sections; ++s) {
    const std::int32_t name_len = in.i32();
    if (name_len < 0 || name_len > 4096) throw FormatError("'" + path + "': bad section name");
    const std::string name = in.str(static_cast<std::size_t>(name_len));
    const std::int32_t type = in.i32();
    const std::int32_t rank = in.i32();
    if (rank < 0 || rank > 8) throw FormatError("'" + path + "': bad rank in section " + name);
    std::vector<int> dims(static_cast<std::size_t>(rank));
    std::size_t n = 1;
    for (auto& d : dims) {
      d = in.i32();
      if (d < 0 || d > (1 << 24)) throw FormatError("'" + path + "': bad dimension in " + name);
      n *= static_cast<std::size_t>(d);
    }
    if (n * 4 > in.remaining()) throw FormatError("'" + path + "' is truncated");
    if (type == 1) {
      std::vector<std::int32_t> v(n);
      for (auto& x : v) x = in.i32();
      if (name != "config") continue;
      std::size_t i = 0;
      auto next = [&]() {
        if (i >= v.size()) throw FormatError("'" + path + "': short config section");
        return v[i++];
      };
      auto& cfg = model.config;
      cfg.in_channels = next();
      cfg.k = next();
      cfg.full_res_channels = next();
      auto word = [&]() {
        const auto lo = next();
        return join(lo, next());
      };
      cfg.seed = word();
      cfg.input_scale = std::bit_cast<double>(word());
      cfg.out_gain = std::bit_cast<double>(word());
      cfg.embed_channels.resize(static_cast<std::size_t>(std::clamp(next(), 0, 64)));
      for (auto& e : cfg.embed_channels) e = next();
      cfg.head_channels.resize(static_cast<std::size_t>(std::clamp(next(), 0, 64)));
      for (auto& e : cfg.head_channels) e = next();
      have_config = true;
    } else if (type == 0) {
      Tensor<float> t;
      t.shape = dims;
      t.data.resize(n);
      for (auto& x : t.data) x = in.f32();
      model.params.names.push_back(name);
      model.params.tensors.push_back(std::move(t));
    } else {
      throw FormatError("'" + path + "': unknown section type " + std::to_string(type));
    }
  }
  if (!have_config) throw FormatError("'" + path + "': missing config section");
  if (in.remaining() != 0) throw FormatError("'" + path + "': trailing bytes");
  try {
    model.config.validate();
    const auto expect = init_params(model.config);
    if (expect.names != model.params.names) throw FormatError("parameter names do not match the config");
    for (std::size_t i = 0; i < expect.size(); ++i)
      if (expect.tensors[i].shape != model.params.tensors[i].shape) {
        throw FormatError("shape of " + expect.names[i] + " does not match the config");
      }
  } catch (const FormatError& e) {
    throw FormatError("'" + path + "': " + e.what());
  } catch (const Error& e) {
    throw FormatError("'" + path + "': invalid config: " + e.what());
  }
  return model;
}

void write_mask(const Image& labels, int num_objects, const std::string& path) {
  if (num_objects < 1 || num_objects > 255) throw ParameterError("mask: object count must lie in [1, 255]");
  Image out(labels.height(), labels.width(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const long id = std::lround(labels.data()[i]);
    if (id < 0 || id > num_objects) throw ParameterError("mask: label " + std::to_string(id) + " out of range");
    out.storage()[i] = std::round(id * 255.0 / num_objects) / 255.0;
  }
  write_image(out, path);
}

Image read_mask(const std::string& path, int num_objects) {
  if (num_objects < 1 || num_objects > 255) throw ParameterError("mask: object count must lie in [1, 255]");
  const Image img = to_gray(read_image(path));
  Image labels(img.height(), img.width(), 1);
  for (std::size_t i = 0; i < img.size(); ++i) {
    labels.storage()[i] = std::clamp<double>(std::lround(img.data()[i] * num_objects), 0, num_objects);
  }
  return labels;
}

void write_joints_csv(const std::vector<std::vector<Joint>>& joints, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "frame,joint_id,row,col,visible\n";
  char buf[128];
  for (std::size_t f = 0; f < joints.size(); ++f)
    for (std::size_t j = 0; j < joints[f].size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g,%d\n", f, j, joints[f][j].row,
                    joints[f][j].col, joints[f][j].visible ? 1 : 0);
      out << buf;
    }
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<std::vector<Joint>> read_joints_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (trim(line) != "frame,joint_id,row,col,visible") {
    throw FormatError("'" + path + "': expected header frame,joint_id,row,col,visible");
  }
  std::vector<std::vector<Joint>> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::size_t frame = 0, id = 0;
    double row = 0, col = 0;
    int vis = 0;
    if (std::sscanf(line.c_str(), "%zu,%zu,%lf,%lf,%d", &frame, &id, &row, &col, &vis) != 5) {
      throw FormatError("'" + path + "': malformed line " + std::to_string(lineno));
    }
    if (frame >= out.size()) out.resize(frame + 1);
    if (id >= out[frame].size()) out[frame].resize(id + 1, Joint{0.0, 0.0, false});
    out[frame][id] = Joint{row, col, vis != 0};
  }
  return out;
}

std::string file_sha256(const std::string& path) {
  const auto bytes = read_bytes(path);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr)) {
    throw IoError("sha256 failed for '" + path + "'");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

void RunManifest::compute_checksums(const std::string& dir) {
  checksums.clear();
  for (const auto& rel : outputs) {
    const fs::path p = fs::path(dir) / rel;
    if (fs::is_regular_file(p)) checksums[rel] = file_sha256(p.string());
  }
}

void write_manifest(const RunManifest& m, const std::string& path) {
  std::ostringstream out;
  out << "# mgpff run manifest\n";
  out << "# command: " << m.command << "\n";
  char dur[64];
  std::snprintf(dur, sizeof(dur), "%.3f", m.duration_s);
  out << "# duration_s: " << dur << "\n";
  for (const auto& o : m.outputs) out << "# output: " << o << "\n";
  for (const auto& [file, sum] : m.checksums) out << "# sha256: " << sum << " " << file << "\n";
  for (const auto& [k, v] : m.notes) out << "# " << k << ": " << v << "\n";
  for (const auto& [k, v] : m.config) out << k << " = " << quote_if_needed(v) << "\n";
  write_bytes(path, out.str());
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  RunManifest m;
  std::string line;
  auto meta = [&](const std::string& key) -> std::optional<std::string> {
    const std::string tag = "# " + key + ": ";
    if (line.rfind(tag, 0) == 0) return trim(line.substr(tag.size()));
    return std::nullopt;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (auto v = meta("command")) m.command = *v;
      if (auto v = meta("duration_s")) m.duration_s = std::stod(*v);
      if (auto v = meta("output")) m.outputs.push_back(*v);
      static const char* known[] = {"command", "duration_s", "output", "sha256"};
      const auto colon = line.find(": ");
      if (colon != std::string::npos && line.size() > 2) {
        const std::string key = line.substr(2, colon - 2);
        if (std::find(std::begin(known), std::end(known), key) == std::end(known) &&
            key.find(' ') == std::string::npos) {
          m.notes.emplace_back(key, trim(line.substr(colon + 2)));
        }
      }
      if (auto v = meta("sha256")) {
        const auto sp = v->find(' ');
        if (sp == std::string::npos) throw FormatError("'" + path + "': malformed checksum line");
        m.checksums[v->substr(sp + 1)] = v->substr(0, sp);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("'" + path + "': expected key = value, got '" + line + "'");
    m.config.emplace_back(trim(line.substr(0, eq)), unquote(trim(line.substr(eq + 1))));
  }
  return m;
}

std::vector<std::string> list_images(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = lower_ext(e.path().string());
    if (ext == ".png" || ext == ".pgm" || ext == ".ppm") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mgpff
