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

#include "mgpff/multigrid.hpp"

#include <algorithm>
#include <string>

#include "mgpff/errors.hpp"

namespace mgpff {

void PyramidConfig::validate() const {
  if (levels < 1) throw ParameterError("pyramid: levels must be >= 1");
  if (levels > 16) throw ParameterError("pyramid: levels must be <= 16");
  if (k < 1 || k % 2 == 0) throw ParameterError("pyramid: kernel size must be odd");
}

std::size_t pyramid_coefficient_count(int height, int width, const PyramidConfig& cfg) {
  cfg.validate();
  const int m = cfg.size_multiple();
  const std::size_t h = static_cast<std::size_t>((height + m - 1) / m * m);
  const std::size_t w = static_cast<std::size_t>((width + m - 1) / m * m);
  std::size_t total = 0;
  for (int l = 0; l < cfg.levels; ++l) {
    total += (h >> l) * (w >> l) * static_cast<std::size_t>(cfg.k * cfg.k);
  }
  return total;
}

MultigridResult coarse_to_fine(const ScalePredictor& predict, const Image& img_b,
                               const Image& img_a, const PyramidConfig& cfg,
                               const LossWeights& weights) {
  cfg.validate();
  weights.validate();
  if (!img_b.same_shape(img_a)) throw DimensionError("coarse_to_fine: frame sizes differ");
  const int m = cfg.size_multiple();
  const Image pad_b = pad_to_multiple(img_b, m).first;
  const Image pad_a = pad_to_multiple(img_a, m).first;
  const auto pyr_b = build_pyramid(pad_b, cfg.levels);
  const auto pyr_a = build_pyramid(pad_a, cfg.levels);

  MultigridResult result;
  result.height = img_b.height();
  result.width = img_b.width();
  const Image& coarsest = pyr_b.back();
  CoordinateFlow acc_ba(coarsest.height(), coarsest.width());
  CoordinateFlow acc_ab(coarsest.height(), coarsest.width());

  for (int l = cfg.levels; l >= 1; --l) {
    const Image& b = pyr_b[static_cast<std::size_t>(l - 1)];
    const Image& a = pyr_a[static_cast<std::size_t>(l - 1)];
    const Image warped_b = warp_with_flow(b, acc_ba);
    const Image warped_a = warp_with_flow(a, acc_ab);
    const DirectedPair pair{warped_b, a, warped_a, b};
    auto [t_ba, t_ab] = predict(pair, l);
    for (const auto* t : {&t_ba, &t_ab}) {
      if (t->height() != b.height() || t->width() != b.width() || t->k() != cfg.k) {
        throw DimensionError("coarse_to_fine: predictor returned " + std::to_string(t->height()) +
                             "x" + std::to_string(t->width()) + " k=" + std::to_string(t->k()) +
                             " at scale " + std::to_string(l) + ", expected " +
                             std::to_string(b.height()) + "x" + std::to_string(b.width()) +
                             " k=" + std::to_string(cfg.k));
      }
    }
    t_ba.set_scale_index(l);
    t_ab.set_scale_index(l);

    ScaleRecord rec;
    rec.scale_index = l;
    std::tie(rec.loss_ba, rec.loss_ab) = total_loss(t_ba, t_ab, pair, weights);
    rec.residual_ba = filters_to_flow(t_ba);
    rec.residual_ab = filters_to_flow(t_ab);
    rec.recon = apply_filter_flow(t_ba, warped_b);
    acc_ba = compose_flows(rec.residual_ba, acc_ba);
    acc_ab = compose_flows(rec.residual_ab, acc_ab);
    rec.flow_ba = acc_ba;
    rec.flow_ab = acc_ab;
    rec.field_ba = std::move(t_ba);
    rec.field_ab = std::move(t_ab);
    result.scales.push_back(std::move(rec));
    if (l > 1) {
      acc_ba = upscale_flow_2x(acc_ba);
      acc_ab = upscale_flow_2x(acc_ab);
    }
  }
  result.recon = crop(warp_with_flow(pad_b, acc_ba), result.height, result.width);
  result.flow = std::move(acc_ba);
  result.flow_ab = std::move(acc_ab);
  return result;
}

LossWeights solver_default_weights() {
  LossWeights w;
  w.sm = 0.1;
  return w;
}

void SolverOptions::validate() const {
  if (iterations < 0) throw ParameterError("solver: iterations must be >= 0");
  if (!(learning_rate > 0.0)) throw ParameterError("solver: learning rate must be positive");
  weights.validate();
}

FieldPair solve_scale(const DirectedPair& pair, int k, int scale_index, const SolverOptions& opt) {
  opt.validate();
  const int h = pair.tgt_ba.height();
  const int w = pair.tgt_ba.width();
  FilterFlowField t_ba(h, w, k, scale_index);
  FilterFlowField t_ab(h, w, k, scale_index);
  const std::size_t n = t_ba.logits().size();
  std::vector<double> x(2 * n, 0.0), grad(2 * n), m, v;
  long step = 0;
  AdamConfig adam;
  adam.learning_rate = opt.learning_rate;
  for (int it = 0; it < opt.iterations; ++it) {
    auto eval = evaluate_objective(t_ba, t_ab, pair, opt.weights);
    std::copy(eval.grad_ba.begin(), eval.grad_ba.end(), grad.begin());
    std::copy(eval.grad_ab.begin(), eval.grad_ab.end(), grad.begin() + static_cast<long>(n));
    adam_step(x, grad, m, v, step, adam);
    std::copy(x.begin(), x.begin() + static_cast<long>(n), t_ba.logits().begin());
    std::copy(x.begin() + static_cast<long>(n), x.end(), t_ab.logits().begin());
  }
  return {std::move(t_ba), std::move(t_ab)};
}

MultigridResult solve_direct(const Image& img_b, const Image& img_a, const PyramidConfig& cfg,
                             const SolverOptions& opt) {
  cfg.validate();
  opt.validate();
  const int m = cfg.size_multiple();
  const std::size_t cost = static_cast<std::size_t>((img_b.height() + m - 1) / m * m) *
                           static_cast<std::size_t>((img_b.width() + m - 1) / m * m) *
                           static_cast<std::size_t>(cfg.k * cfg.k);
  if (cost > opt.budget) {
    throw SizeError("solve_direct: H*W*k^2 = " + std::to_string(cost) + " exceeds the budget of " +
                    std::to_string(opt.budget) + "; reduce the resolution or the kernel size");
  }
  const int k = cfg.k;
  return coarse_to_fine(
      [&](const DirectedPair& pair, int scale) { return solve_scale(pair, k, scale, opt); },
      img_b, img_a, cfg, opt.weights);
}

ScalePredictor network_predictor(const Model& model) {
  return [&model](const DirectedPair& pair, int scale) -> FieldPair {
    return {predict_filters(model, pair.src_ba, pair.tgt_ba, scale),
            predict_filters(model, pair.src_ab, pair.tgt_ab, scale)};
  };
}

MultigridResult infer_network(const Model& model, const Image& img_b, const Image& img_a,
                              const PyramidConfig& cfg) {
  if (model.config.k != cfg.k) {
    throw ParameterError("infer: model kernel size " + std::to_string(model.config.k) +
                         " differs from pyramid kernel size " + std::to_string(cfg.k));
  }
  return coarse_to_fine(network_predictor(model), img_b, img_a, cfg);
}

PairFlowFn direct_flow_fn(const PyramidConfig& cfg, const SolverOptions& opt) {
  return [cfg, opt](const Image& src, const Image& tgt) {
    return solve_direct(src, tgt, cfg, opt).cropped_flow();
  };
}

PairFlowFn network_flow_fn(const Model& model, const PyramidConfig& cfg) {
  return [&model, cfg](const Image& src, const Image& tgt) {
    return infer_network(model, src, tgt, cfg).cropped_flow();
  };
}

CoordinateFlow long_range_flow(const std::vector<CoordinateFlow>& adjacent, int i, int j) {
  const int n = static_cast<int>(adjacent.size()) + 1;
  if (i < 0 || j >= n || i >= j) {
    throw ParameterError("long_range_flow: need 0 <= i < j < " + std::to_string(n) + ", got i=" +
                         std::to_string(i) + " j=" + std::to_string(j));
  }
  CoordinateFlow acc = adjacent[static_cast<std::size_t>(i)];
  for (int t = i + 1; t < j; ++t) acc = compose_flows(adjacent[static_cast<std::size_t>(t)], acc);
  return acc;
}

CoordinateFlow long_range_flow(const std::vector<Image>& frames, int i, int j,
                               const PairFlowFn& flow_fn) {
  const int n = static_cast<int>(frames.size());
  if (i < 0 || j >= n || i >= j) {
    throw ParameterError("long_range_flow: need 0 <= i < j < " + std::to_string(n) + ", got i=" +
                         std::to_string(i) + " j=" + std::to_string(j));
  }
  std::vector<CoordinateFlow> adjacent(static_cast<std::size_t>(j));
  for (int t = i; t < j; ++t) {
    adjacent[static_cast<std::size_t>(t)] =
        flow_fn(frames[static_cast<std::size_t>(t)], frames[static_cast<std::size_t>(t + 1)]);
  }
  return long_range_flow(adjacent, i, j);
}

}  // namespace mgpff
