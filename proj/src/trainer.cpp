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

#include "mgpff/trainer.hpp"

#include <fstream>
#include <random>

#include "mgpff/errors.hpp"

namespace mgpff {

void TrainConfig::validate() const {
  adam.validate();
  if (iterations < 0) throw ParameterError("train: iterations must be >= 0");
  if (pair_window < 1) throw ParameterError("train: pair_window must be >= 1");
  if (batch_size < 1) throw ParameterError("train: batch_size must be >= 1");
  if (!(clip_norm > 0.0)) throw ParameterError("train: clip_norm must be positive");
  if (checkpoint_every < 0) throw ParameterError("train: checkpoint_every must be >= 0");
  weights.validate();
}

std::size_t Corpus::frame_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

void Corpus::validate() const {
  const Image* first = nullptr;
  bool has_pair = false;
  for (const auto& seq : sequences) {
    if (seq.size() >= 2) has_pair = true;
    for (const auto& f : seq) {
      if (!first) first = &f;
      if (!f.same_shape(*first)) {
        throw DimensionError("corpus: frame sizes differ (" + std::to_string(f.height()) + "x" +
                             std::to_string(f.width()) + " vs " + std::to_string(first->height()) +
                             "x" + std::to_string(first->width()) + ")");
      }
    }
  }
  if (!has_pair) throw ParameterError("corpus: no sequence with at least two frames");
}

Image augment_image(const Image& img, bool flip_h, bool flip_v, int quarter_turns) {
  quarter_turns = ((quarter_turns % 4) + 4) % 4;
  const int h = img.height(), w = img.width(), nc = img.channels();
  const bool swap = quarter_turns % 2 == 1;
  Image out(swap ? w : h, swap ? h : w, nc);
  for (int r = 0; r < out.height(); ++r)
    for (int c = 0; c < out.width(); ++c) {
      // Output (r, c) reads the flipped input at the rotated position.
      int sr = r, sc = c;
      switch (quarter_turns) {
        case 1: sr = c; sc = w - 1 - r; break;
        case 2: sr = h - 1 - r; sc = w - 1 - c; break;
        case 3: sr = h - 1 - c; sc = r; break;
        default: break;
      }
      if (flip_v) sr = h - 1 - sr;
      if (flip_h) sc = w - 1 - sc;
      for (int ch = 0; ch < nc; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
    }
  return out;
}

std::vector<TrainLogRow> accumulate_pair_gradient(const Model& model, const Image& img_b,
                                                  const Image& img_a, const PyramidConfig& pyr,
                                                  const LossWeights& weights,
                                                  PredictorParams& grads) {
  if (model.config.k != pyr.k) {
    throw ParameterError("train: model kernel size " + std::to_string(model.config.k) +
                         " differs from pyramid kernel size " + std::to_string(pyr.k));
  }
  std::vector<TrainLogRow> rows;
  auto predict = [&](const DirectedPair& pair, int scale) -> FieldPair {
    auto pba = forward_pass(model.params, model.config, pair.src_ba, pair.tgt_ba);
    auto pab = forward_pass(model.params, model.config, pair.src_ab, pair.tgt_ab);
    FieldPair fields{pass_field(pba, scale), pass_field(pab, scale)};
    auto eval = evaluate_objective(fields.first, fields.second, pair, weights);
    backward_pass(pba, eval.grad_ba, grads);
    backward_pass(pab, eval.grad_ab, grads);
    rows.push_back({0, scale, eval.ba, eval.ab});
    return fields;
  };
  coarse_to_fine(predict, img_b, img_a, pyr, weights);
  return rows;
}

TrainResult train(const Corpus& corpus, const Model& init, const TrainConfig& cfg,
                  const PyramidConfig& pyr, const TrainHooks& hooks) {
  cfg.validate();
  pyr.validate();
  corpus.validate();
  init.config.validate();

  struct PairIndex {
    std::size_t seq;
    int i;
    int j;
  };
  std::vector<PairIndex> pairs;
  for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
    const int n = static_cast<int>(corpus.sequences[s].size());
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n && j - i < std::max(cfg.pair_window, 2); ++j) pairs.push_back({s, i, j});
  }

  TrainResult result;
  Model model = init;
  AdamState state;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> turns(0, 3);

  for (int it = 0; it < cfg.iterations; ++it) {
    auto grads = model.params.zeros_like();
    double total = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& pr = pairs[pick(rng)];
      const bool fh = cfg.flip && coin(rng);
      const bool fv = cfg.flip && coin(rng);
      const int q = cfg.rotate90 ? turns(rng) : 0;
      const auto& seq = corpus.sequences[pr.seq];
      const Image img_b = augment_image(seq[static_cast<std::size_t>(pr.i)], fh, fv, q);
      const Image img_a = augment_image(seq[static_cast<std::size_t>(pr.j)], fh, fv, q);
      auto rows = accumulate_pair_gradient(model, img_b, img_a, pyr, cfg.weights, grads);
      for (auto& row : rows) {
        row.iteration = it;
        total += row.ba.total + row.ab.total;
        result.log.push_back(row);
      }
    }
    if (cfg.batch_size > 1) {
      const float inv = 1.0f / static_cast<float>(cfg.batch_size);
      for (auto& t : grads.tensors)
        for (auto& v : t.data) v *= inv;
    }
    total /= cfg.batch_size;
    clip_grad_norm(grads, cfg.clip_norm);
    adam_step(model.params, grads, state, cfg.adam);
    result.totals.push_back(total);
    if (hooks.progress) hooks.progress(it, total);
    if (hooks.checkpoint && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      hooks.checkpoint(it + 1, model.params);
    }
  }
  result.params = std::move(model.params);
  return result;
}

void write_train_log(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log '" + path + "'");
  out << kLossCsvHeader << '\n';
  for (const auto& row : log) {
    out << to_csv_row(row.iteration, row.scale, row.ba) << '\n';
    out << to_csv_row(row.iteration, row.scale, row.ab) << '\n';
  }
  if (!out) throw IoError("failed writing training log '" + path + "'");
}

}  // namespace mgpff
