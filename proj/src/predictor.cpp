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

#include "mgpff/predictor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>

#include "mgpff/errors.hpp"

namespace mgpff {

namespace {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

constexpr int kConv = 3;

std::size_t product(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

// Zero-padded 3x3 patches: rows (ci, ky, kx), columns pixels.
template <class T>
RowMatrix<T> conv_cols(const Tensor<T>& x) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  RowMatrix<T> cols = RowMatrix<T>::Zero(static_cast<Eigen::Index>(c) * kConv * kConv,
                                         static_cast<Eigen::Index>(h) * w);
  for (int ci = 0; ci < c; ++ci) {
    const T* src = x.data.data() + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kConv; ++ky) {
      for (int kx = 0; kx < kConv; ++kx) {
        T* dst = cols.data() + static_cast<std::size_t>((ci * kConv + ky) * kConv + kx) * h * w;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - 1;
            if (sx >= 0 && sx < w) dst[y * w + xx] = src[sy * w + sx];
          }
        }
      }
    }
  }
  return cols;
}

template <class T>
void conv_cols_backward(const RowMatrix<T>& d_cols, Tensor<T>& dx) {
  const int c = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
  for (int ci = 0; ci < c; ++ci) {
    T* dst = dx.data.data() + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kConv; ++ky) {
      for (int kx = 0; kx < kConv; ++kx) {
        const T* src =
            d_cols.data() + static_cast<std::size_t>((ci * kConv + ky) * kConv + kx) * h * w;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - 1;
            if (sx >= 0 && sx < w) dst[sy * w + sx] += src[y * w + xx];
          }
        }
      }
    }
  }
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "}";
}

}  // namespace

template <class T>
Tensor<T>::Tensor(std::vector<int> s, T fill) : shape(std::move(s)), data(product(shape), fill) {}

template <class T>
std::size_t Params<T>::numel() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

template <class T>
Params<T> Params<T>::zeros_like() const {
  Params out;
  out.names = names;
  for (const auto& t : tensors) out.tensors.emplace_back(t.shape);
  return out;
}

template <class To, class From>
Params<To> cast_params(const Params<From>& p) {
  Params<To> out;
  out.names = p.names;
  for (const auto& t : p.tensors) {
    Tensor<To> c;
    c.shape = t.shape;
    c.data.assign(t.data.begin(), t.data.end());
    out.tensors.push_back(std::move(c));
  }
  return out;
}

NetConfig NetConfig::for_kernel(int k, int in_channels) {
  NetConfig cfg;
  cfg.k = k;
  cfg.in_channels = in_channels;
  cfg.head_channels = {32, k * k};
  return cfg;
}

void NetConfig::validate() const {
  if (k < 1 || k % 2 == 0) throw ParameterError("net: kernel size must be odd");
  if (in_channels < 1) throw ParameterError("net: in_channels must be >= 1");
  if (embed_channels.size() < 2) throw ParameterError("net: need at least two embed widths");
  if (full_res_channels < 1) throw ParameterError("net: full_res_channels must be >= 1");
  if (!(out_gain > 0.0 && out_gain <= 1.0)) throw ParameterError("net: out_gain must lie in (0, 1]");
  if (!(input_scale > 0.0)) throw ParameterError("net: input_scale must be positive");
  if (head_channels.empty() || head_channels.back() != k * k) {
    throw ParameterError("net: final head width must equal k*k = " + std::to_string(k * k));
  }
  for (int c : embed_channels)
    if (c < 1) throw ParameterError("net: channel widths must be positive");
  for (int c : head_channels)
    if (c < 1) throw ParameterError("net: channel widths must be positive");
}

namespace {

struct LayerSpec {
  std::string name;
  int in;
  int out;
};

// Parameter layout shared by init_params and forward_pass.
std::vector<LayerSpec> layer_specs(const NetConfig& cfg) {
  const auto& e = cfg.embed_channels;
  const int m = static_cast<int>(e.size());
  std::vector<LayerSpec> specs;
  int prev = cfg.in_channels;
  for (int i = 0; i + 1 < m; ++i) {
    specs.push_back({"enc." + std::to_string(i), prev, e[i]});
    prev = e[i];
  }
  for (int i = m - 2; i >= 1; --i) specs.push_back({"dec." + std::to_string(i), e[i], e[i - 1]});
  specs.push_back({"emb", e[0], e[m - 1]});
  specs.push_back({"full.0", cfg.in_channels, cfg.full_res_channels});
  specs.push_back({"full.1", cfg.full_res_channels, e[m - 1]});
  prev = 2 * e[m - 1];
  for (std::size_t j = 0; j < cfg.head_channels.size(); ++j) {
    specs.push_back({"head." + std::to_string(j), prev, cfg.head_channels[j]});
    prev = cfg.head_channels[j];
  }
  return specs;
}

}  // namespace

PredictorParams init_params(const NetConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  PredictorParams params;
  const auto specs = layer_specs(cfg);
  for (const auto& spec : specs) {
    const int fan_in = spec.in * kConv * kConv;
    const double gain = &spec == &specs.back() ? cfg.out_gain : 1.0;
    const double bound = gain * std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<float> w({spec.out, spec.in, kConv, kConv});
    for (auto& v : w.data) v = static_cast<float>(u(rng));
    params.names.push_back(spec.name + ".weight");
    params.tensors.push_back(std::move(w));
    params.names.push_back(spec.name + ".bias");
    params.tensors.emplace_back(std::vector<int>{spec.out});
  }
  return params;
}

template <class T>
typename Tape<T>::Var Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<Var>(nodes_.size() - 1);
}

template <class T>
typename Tape<T>::Var Tape<T>::input(Tensor<T> value) {
  Node n;
  n.op = Op::Input;
  n.value = std::move(value);
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::param(std::size_t index, const Tensor<T>& value) {
  Node n;
  n.op = Op::Param;
  n.param_index = index;
  n.value = value;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::conv2d(Var x, Var weight, Var bias) {
  const auto& xv = value(x);
  const auto& wv = value(weight);
  const auto& bv = value(bias);
  if (xv.shape.size() != 3 || wv.shape.size() != 4 || wv.dim(1) != xv.dim(0) ||
      wv.dim(2) != kConv || wv.dim(3) != kConv || bv.numel() != static_cast<std::size_t>(wv.dim(0))) {
    throw DimensionError("conv2d: input " + shape_str(xv.shape) + " vs weight " +
                         shape_str(wv.shape));
  }
  const int cout = wv.dim(0);
  const int h = xv.dim(1), w = xv.dim(2);
  Node n;
  n.op = Op::Conv;
  n.a = x;
  n.b = weight;
  n.c = bias;
  n.value = Tensor<T>({cout, h, w});
  const RowMatrix<T> cols = conv_cols(xv);
  ConstMatrixMap<T> wm(wv.data.data(), cout, cols.rows());
  MatrixMap<T> out(n.value.data.data(), cout, static_cast<Eigen::Index>(h) * w);
  out.noalias() = wm * cols;
  for (int co = 0; co < cout; ++co) out.row(co).array() += bv.data[co];
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::relu(Var x) {
  Node n;
  n.op = Op::Relu;
  n.a = x;
  n.value = value(x);
  for (auto& v : n.value.data) v = v > T(0) ? v : T(0);
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::avg_pool2(Var x) {
  const auto& xv = value(x);
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (h % 2 || w % 2) throw DimensionError("avg_pool2: odd feature map " + shape_str(xv.shape));
  Node n;
  n.op = Op::Pool;
  n.a = x;
  n.value = Tensor<T>({c, h / 2, w / 2});
  for (int ci = 0; ci < c; ++ci) {
    const T* s = xv.data.data() + static_cast<std::size_t>(ci) * h * w;
    T* d = n.value.data.data() + static_cast<std::size_t>(ci) * (h / 2) * (w / 2);
    for (int y = 0; y < h / 2; ++y)
      for (int xx = 0; xx < w / 2; ++xx)
        d[y * (w / 2) + xx] = T(0.25) * (s[2 * y * w + 2 * xx] + s[2 * y * w + 2 * xx + 1] +
                                         s[(2 * y + 1) * w + 2 * xx] + s[(2 * y + 1) * w + 2 * xx + 1]);
  }
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::upsample2(Var x) {
  const auto& xv = value(x);
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  Node n;
  n.op = Op::Upsample;
  n.a = x;
  n.value = Tensor<T>({c, 2 * h, 2 * w});
  for (int ci = 0; ci < c; ++ci) {
    const T* s = xv.data.data() + static_cast<std::size_t>(ci) * h * w;
    T* d = n.value.data.data() + static_cast<std::size_t>(ci) * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx) d[y * 2 * w + xx] = s[(y / 2) * w + xx / 2];
  }
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::add(Var a, Var b) {
  if (value(a).shape != value(b).shape) {
    throw DimensionError("add: " + shape_str(value(a).shape) + " vs " + shape_str(value(b).shape));
  }
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.value = value(a);
  const auto& bv = value(b).data;
  for (std::size_t i = 0; i < bv.size(); ++i) n.value.data[i] += bv[i];
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Var Tape<T>::concat(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2)) {
    throw DimensionError("concat: " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  }
  Node n;
  n.op = Op::Concat;
  n.a = a;
  n.b = b;
  n.value = Tensor<T>({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  std::copy(av.data.begin(), av.data.end(), n.value.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), n.value.data.begin() + av.numel());
  return push(std::move(n));
}

template <class T>
void Tape<T>::backward(Var out, const Tensor<T>& upstream, Params<T>& grads) {
  if (upstream.shape != value(out).shape) {
    throw DimensionError("backward: upstream " + shape_str(upstream.shape) + " vs output " +
                         shape_str(value(out).shape));
  }
  std::vector<Tensor<T>> g(nodes_.size());
  g[static_cast<std::size_t>(out)] = upstream;
  auto grad_of = [&](Var v) -> Tensor<T>& {
    auto& t = g[static_cast<std::size_t>(v)];
    if (t.data.empty()) t = Tensor<T>(nodes_[static_cast<std::size_t>(v)].value.shape);
    return t;
  };
  for (Var i = out; i >= 0; --i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    if (g[ui].data.empty()) continue;
    const Node& n = nodes_[ui];
    const Tensor<T>& gy = g[ui];
    switch (n.op) {
      case Op::Input:
        break;
      case Op::Param: {
        if (n.param_index >= grads.size() || grads.tensors[n.param_index].shape != n.value.shape) {
          throw DimensionError("backward: gradient buffer does not match parameter layout");
        }
        auto& dst = grads.tensors[n.param_index].data;
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += gy.data[j];
        break;
      }
      case Op::Conv: {
        const auto& xv = value(n.a);
        const auto& wv = value(n.b);
        const int cout = wv.dim(0);
        const Eigen::Index pixels = static_cast<Eigen::Index>(xv.dim(1)) * xv.dim(2);
        const RowMatrix<T> cols = conv_cols(xv);
        ConstMatrixMap<T> dy(gy.data.data(), cout, pixels);
        ConstMatrixMap<T> wm(wv.data.data(), cout, cols.rows());
        MatrixMap<T> dw(grad_of(n.b).data.data(), cout, cols.rows());
        dw.noalias() += dy * cols.transpose();
        auto& db = grad_of(n.c).data;
        for (int co = 0; co < cout; ++co) db[co] += dy.row(co).sum();
        const RowMatrix<T> d_cols = wm.transpose() * dy;
        conv_cols_backward(d_cols, grad_of(n.a));
        break;
      }
      case Op::Relu: {
        auto& dx = grad_of(n.a).data;
        for (std::size_t j = 0; j < dx.size(); ++j)
          if (n.value.data[j] > T(0)) dx[j] += gy.data[j];
        break;
      }
      case Op::Pool: {
        auto& dx = grad_of(n.a);
        const int c = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
        for (int ci = 0; ci < c; ++ci) {
          T* d = dx.data.data() + static_cast<std::size_t>(ci) * h * w;
          const T* s = gy.data.data() + static_cast<std::size_t>(ci) * (h / 2) * (w / 2);
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) d[y * w + xx] += T(0.25) * s[(y / 2) * (w / 2) + xx / 2];
        }
        break;
      }
      case Op::Upsample: {
        auto& dx = grad_of(n.a);
        const int c = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
        for (int ci = 0; ci < c; ++ci) {
          T* d = dx.data.data() + static_cast<std::size_t>(ci) * h * w;
          const T* s = gy.data.data() + static_cast<std::size_t>(ci) * 4 * h * w;
          for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx) d[(y / 2) * w + xx / 2] += s[y * 2 * w + xx];
        }
        break;
      }
      case Op::Add: {
        for (Var v : {n.a, n.b}) {
          auto& dx = grad_of(v).data;
          for (std::size_t j = 0; j < dx.size(); ++j) dx[j] += gy.data[j];
        }
        break;
      }
      case Op::Concat: {
        auto& da = grad_of(n.a).data;
        auto& db = grad_of(n.b).data;
        for (std::size_t j = 0; j < da.size(); ++j) da[j] += gy.data[j];
        for (std::size_t j = 0; j < db.size(); ++j) db[j] += gy.data[da.size() + j];
        break;
      }
    }
  }
}

namespace {

template <class T>
Tensor<T> image_tensor(const Image& img, double scale) {
  Tensor<T> t({img.channels(), img.height(), img.width()});
  const std::size_t hw = img.pixels();
  for (std::size_t p = 0; p < hw; ++p)
    for (int ch = 0; ch < img.channels(); ++ch)
      t.data[static_cast<std::size_t>(ch) * hw + p] = static_cast<T>((img.data()[p * img.channels() + ch] - 0.5) * scale);
  return t;
}

template <class T>
struct Leaves {
  std::vector<typename Tape<T>::Var> vars;
  std::size_t next = 0;
  // Weight and bias of the next layer, in layer_specs order.
  std::pair<int, int> layer() {
    const auto w = vars[next++];
    const auto b = vars[next++];
    return {w, b};
  }
};

template <class T>
typename Tape<T>::Var embed(Tape<T>& tape, const NetConfig& cfg, Leaves<T> leaves,
                            typename Tape<T>::Var x) {
  using Var = typename Tape<T>::Var;
  const int m = static_cast<int>(cfg.embed_channels.size());
  std::vector<Var> skips;
  Var h = x;
  for (int i = 0; i + 1 < m; ++i) {
    if (i > 0) h = tape.avg_pool2(h);
    auto [w, b] = leaves.layer();
    h = tape.relu(tape.conv2d(h, w, b));
    skips.push_back(h);
  }
  for (int i = m - 2; i >= 1; --i) {
    auto [w, b] = leaves.layer();
    h = tape.relu(tape.conv2d(h, w, b));
    h = tape.add(tape.upsample2(h), skips[static_cast<std::size_t>(i - 1)]);
  }
  auto [ew, eb] = leaves.layer();
  h = tape.conv2d(h, ew, eb);
  auto [f0w, f0b] = leaves.layer();
  Var f = tape.relu(tape.conv2d(x, f0w, f0b));
  auto [f1w, f1b] = leaves.layer();
  f = tape.conv2d(f, f1w, f1b);
  return tape.add(h, f);
}

}  // namespace

template <class T>
NetworkPass<T> forward_pass(const Params<T>& params, const NetConfig& cfg, const Image& src,
                            const Image& tgt) {
  cfg.validate();
  if (!src.same_shape(tgt)) throw DimensionError("forward: source and target sizes differ");
  if (src.channels() != cfg.in_channels) {
    throw DimensionError("forward: expected " + std::to_string(cfg.in_channels) +
                         " input channels, got " + std::to_string(src.channels()));
  }
  const auto specs = layer_specs(cfg);
  if (params.size() != 2 * specs.size()) {
    throw DimensionError("forward: parameter count does not match the network config");
  }
  NetworkPass<T> pass;
  pass.height = src.height();
  pass.width = src.width();
  pass.k = cfg.k;
  auto& tape = pass.tape;

  Leaves<T> leaves;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& spec = specs[i / 2];
    const std::vector<int> expect =
        i % 2 == 0 ? std::vector<int>{spec.out, spec.in, kConv, kConv} : std::vector<int>{spec.out};
    if (params.tensors[i].shape != expect) {
      throw DimensionError("forward: parameter " + params.names[i] + " has shape " +
                           shape_str(params.tensors[i].shape) + ", expected " + shape_str(expect));
    }
    leaves.vars.push_back(tape.param(i, params.tensors[i]));
  }

  const int m = cfg.size_multiple();
  const auto padded_src = pad_to_multiple(src, m).first;
  const auto padded_tgt = pad_to_multiple(tgt, m).first;
  const auto xs = tape.input(image_tensor<T>(padded_src, cfg.input_scale));
  const auto xt = tape.input(image_tensor<T>(padded_tgt, cfg.input_scale));
  auto h = tape.concat(embed(tape, cfg, leaves, xs), embed(tape, cfg, leaves, xt));

  Leaves<T> head = leaves;
  head.next = 2 * (specs.size() - cfg.head_channels.size());
  for (std::size_t j = 0; j < cfg.head_channels.size(); ++j) {
    auto [w, b] = head.layer();
    h = tape.conv2d(h, w, b);
    if (j + 1 < cfg.head_channels.size()) h = tape.relu(h);
  }
  pass.logits = h;
  return pass;
}

template <class T>
FilterFlowField pass_field(const NetworkPass<T>& pass, int scale_index) {
  const auto& out = pass.tape.value(pass.logits);
  const int taps = pass.k * pass.k;
  const int pw = out.dim(2);
  const std::size_t plane = static_cast<std::size_t>(out.dim(1)) * pw;
  FilterFlowField field(pass.height, pass.width, pass.k, scale_index);
  for (int r = 0; r < pass.height; ++r)
    for (int c = 0; c < pass.width; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * pass.width + c;
      const std::size_t q = static_cast<std::size_t>(r) * pw + c;
      for (int t = 0; t < taps; ++t) field.logit(p, t) = static_cast<double>(out.data[t * plane + q]);
    }
  return field;
}

template <class T>
std::vector<T> pass_logits(const NetworkPass<T>& pass) {
  const auto& out = pass.tape.value(pass.logits);
  const int taps = pass.k * pass.k;
  const int pw = out.dim(2);
  const std::size_t plane = static_cast<std::size_t>(out.dim(1)) * pw;
  std::vector<T> logits(static_cast<std::size_t>(pass.height) * pass.width * taps);
  for (int r = 0; r < pass.height; ++r)
    for (int c = 0; c < pass.width; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * pass.width + c;
      const std::size_t q = static_cast<std::size_t>(r) * pw + c;
      for (int t = 0; t < taps; ++t) logits[p * taps + t] = out.data[t * plane + q];
    }
  return logits;
}

template <class T>
void backward_pass(NetworkPass<T>& pass, std::span<const double> d_logits, Params<T>& grads) {
  const int taps = pass.k * pass.k;
  if (d_logits.size() != static_cast<std::size_t>(pass.height) * pass.width * taps) {
    throw DimensionError("backward: logit gradient does not match the forward pass");
  }
  const auto& out = pass.tape.value(pass.logits);
  Tensor<T> up(out.shape);
  const int pw = out.dim(2);
  const std::size_t plane = static_cast<std::size_t>(out.dim(1)) * pw;
  for (int r = 0; r < pass.height; ++r)
    for (int c = 0; c < pass.width; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * pass.width + c;
      const std::size_t q = static_cast<std::size_t>(r) * pw + c;
      for (int t = 0; t < taps; ++t) {
        // Saturated softmax taps yield subnormal gradients that only slow the GEMMs down.
        const double g = d_logits[p * taps + t];
        up.data[t * plane + q] =
            std::abs(g) < std::numeric_limits<T>::min() ? T(0) : static_cast<T>(g);
      }
    }
  pass.tape.backward(pass.logits, up, grads);
}

FilterFlowField predict_filters(const Model& model, const Image& src, const Image& tgt,
                                int scale_index) {
  auto pass = forward_pass(model.params, model.config, src, tgt);
  return pass_field(pass, scale_index);
}

void AdamConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ParameterError("adam: learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ParameterError("adam: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ParameterError("adam: epsilon must be positive");
}

void adam_step(std::span<double> x, std::span<const double> grad, std::vector<double>& m,
               std::vector<double>& v, long& step, const AdamConfig& cfg) {
  if (grad.size() != x.size()) throw DimensionError("adam: gradient/parameter size mismatch");
  if (m.empty()) m.assign(x.size(), 0.0);
  if (v.empty()) v.assign(x.size(), 0.0);
  if (m.size() != x.size() || v.size() != x.size()) throw DimensionError("adam: moment size mismatch");
  ++step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    x[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

template <class T>
void adam_step(Params<T>& params, const Params<T>& grads, AdamState& state, const AdamConfig& cfg) {
  cfg.validate();
  if (grads.size() != params.size()) throw DimensionError("adam: gradient/parameter count mismatch");
  if (state.m.empty()) {
    for (const auto& t : params.tensors) {
      state.m.emplace_back(t.numel(), 0.0);
      state.v.emplace_back(t.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam: state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& x = params.tensors[i].data;
    const auto& g = grads.tensors[i].data;
    if (g.size() != x.size() || state.m[i].size() != x.size()) {
      throw DimensionError("adam: shape mismatch for " + params.names[i]);
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      const double step = cfg.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.epsilon);
      x[j] = static_cast<T>(static_cast<double>(x[j]) - step);
    }
  }
}

template <class T>
double clip_grad_norm(Params<T>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& t : grads.tensors)
    for (T v : t.data) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& t : grads.tensors)
      for (T& v : t.data) v = static_cast<T>(static_cast<double>(v) * s);
  }
  return norm;
}

template struct Tensor<float>;
template struct Tensor<double>;
template struct Tensor<long double>;
template struct Params<float>;
template struct Params<double>;
template struct Params<long double>;
template class Tape<float>;
template class Tape<double>;
template class Tape<long double>;
template Params<long double> cast_params<long double, float>(const Params<float>&);
template Params<float> cast_params<float, double>(const Params<double>&);
template Params<double> cast_params<double, float>(const Params<float>&);
template Params<float> cast_params<float, float>(const Params<float>&);
template Params<double> cast_params<double, double>(const Params<double>&);
template NetworkPass<float> forward_pass(const Params<float>&, const NetConfig&, const Image&,
                                         const Image&);
template NetworkPass<double> forward_pass(const Params<double>&, const NetConfig&, const Image&,
                                          const Image&);
template FilterFlowField pass_field(const NetworkPass<float>&, int);
template FilterFlowField pass_field(const NetworkPass<double>&, int);
template NetworkPass<long double> forward_pass(const Params<long double>&, const NetConfig&,
                                               const Image&, const Image&);
template std::vector<float> pass_logits(const NetworkPass<float>&);
template std::vector<double> pass_logits(const NetworkPass<double>&);
template std::vector<long double> pass_logits(const NetworkPass<long double>&);
template void backward_pass(NetworkPass<float>&, std::span<const double>, Params<float>&);
template void backward_pass(NetworkPass<double>&, std::span<const double>, Params<double>&);
template void adam_step(Params<float>&, const Params<float>&, AdamState&, const AdamConfig&);
template void adam_step(Params<double>&, const Params<double>&, AdamState&, const AdamConfig&);
template double clip_grad_norm(Params<float>&, double);
template double clip_grad_norm(Params<double>&, double);

}  // namespace mgpff
