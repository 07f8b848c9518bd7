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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgpff/filter_flow.hpp"
#include "mgpff/grid.hpp"

namespace mgpff {

// Dense n-d array. Feature maps use shape {C, H, W}; convolution weights
// {C_out, C_in, kh, kw}; biases {C_out}.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0));

  std::size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  bool operator==(const Tensor&) const = default;
};

template <class T>
struct Params {
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  std::size_t size() const { return tensors.size(); }
  std::size_t numel() const;
  // Zero tensors of the same shapes.
  Params zeros_like() const;
  bool operator==(const Params&) const = default;
};

template <class To, class From>
Params<To> cast_params(const Params<From>& p);

using PredictorParams = Params<float>;

struct NetConfig {
  int in_channels = 1;
  // Per-frame U-shaped encoder: all but the last entry are the widths of the
  // down-path levels (full, 1/2, 1/4, ...); the last is the embedding width.
  std::vector<int> embed_channels{16, 32, 32, 16};
  int full_res_channels = 8;
  // Widths after concatenating the two embeddings; the last must equal k*k.
  std::vector<int> head_channels{32, 49};
  int k = 7;
  std::uint64_t seed = 0;
  // Multiplies the initialization bound of the last head layer so training
  // starts from near-uniform kernels.
  double out_gain = 0.1;
  // Intensities enter the network as (x - 0.5) * input_scale.
  double input_scale = 4.0;

  // Default widths with the head resized to k*k outputs.
  static NetConfig for_kernel(int k, int in_channels = 1);
  void validate() const;
  int levels() const { return static_cast<int>(embed_channels.size()) - 1; }
  // Input sizes must be multiples of this (forward pads internally).
  int size_multiple() const { return 1 << (levels() - 1); }
};

struct Model {
  NetConfig config;
  PredictorParams params;
};

// Fan-in scaled uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)], zero
// biases. Deterministic in config.seed.
PredictorParams init_params(const NetConfig& cfg);

// Reverse-mode tape over the small op set the predictor needs. Values are
// recorded in execution order; backward walks them in reverse.
template <class T>
class Tape {
 public:
  using Var = int;

  Var input(Tensor<T> value);
  // Leaf bound to parameter slot `index`; its gradient lands in grads[index].
  Var param(std::size_t index, const Tensor<T>& value);

  // 'same' zero-padded stride-1 convolution plus bias.
  Var conv2d(Var x, Var weight, Var bias);
  Var relu(Var x);
  Var avg_pool2(Var x);
  Var upsample2(Var x);
  Var add(Var a, Var b);
  Var concat(Var a, Var b);

  const Tensor<T>& value(Var v) const { return nodes_[static_cast<std::size_t>(v)].value; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulates d(sum(upstream * value(out))) / d param into `grads`, which
  // must be shaped like the parameters bound with param().
  void backward(Var out, const Tensor<T>& upstream, Params<T>& grads);

 private:
  enum class Op { Input, Param, Conv, Relu, Pool, Upsample, Add, Concat };
  struct Node {
    Op op = Op::Input;
    Var a = -1, b = -1, c = -1;
    std::size_t param_index = 0;
    Tensor<T> value;
  };
  Var push(Node node);

  std::vector<Node> nodes_;
};

template <class T>
struct NetworkPass {
  Tape<T> tape;
  typename Tape<T>::Var logits = -1;
  int height = 0;  // unpadded input size
  int width = 0;
  int k = 0;
};

// Logits for the pull filters that reconstruct `tgt` from `src`. The two
// pixel embeddings are concatenated in (src, tgt) order, which is the only
// place the direction enters.
template <class T>
NetworkPass<T> forward_pass(const Params<T>& params, const NetConfig& cfg, const Image& src,
                            const Image& tgt);

// Logit grid of a pass in FilterFlowField layout.
template <class T>
FilterFlowField pass_field(const NetworkPass<T>& pass, int scale_index = 1);

// Accumulates parameter gradients given d loss / d logits in FilterFlowField layout.
// Logits of a pass in field layout (pixel-major, taps contiguous), at the
// tape's own precision.
template <class T>
std::vector<T> pass_logits(const NetworkPass<T>& pass);

template <class T>
void backward_pass(NetworkPass<T>& pass, std::span<const double> d_logits, Params<T>& grads);

FilterFlowField predict_filters(const Model& model, const Image& src, const Image& tgt,
                                int scale_index = 1);

struct AdamConfig {
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

// Bias-corrected ADAM update, in place.
template <class T>
void adam_step(Params<T>& params, const Params<T>& grads, AdamState& state, const AdamConfig& cfg);

// Scales grads so their global L2 norm is at most max_norm; returns the norm before clipping.
template <class T>
double clip_grad_norm(Params<T>& grads, double max_norm);

// In-place variant of adam_step for a flat parameter vector (direct solver).
void adam_step(std::span<double> x, std::span<const double> grad, std::vector<double>& m,
               std::vector<double>& v, long& step, const AdamConfig& cfg);

}  // namespace mgpff
