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

#include "mgpff/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mgpff/errors.hpp"
#include "mgpff/losses.hpp"

namespace mgpff {

namespace {

std::string dims(const Image& img) {
  return std::to_string(img.height()) + "x" + std::to_string(img.width());
}

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError(std::string(what) + ": " + dims(a) + " vs " + dims(b));
  }
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
  return 0.5 * (lo + hi);
}

std::vector<std::pair<int, int>> boundary_pixels(const Image& mask) {
  std::vector<std::pair<int, int>> out;
  const int h = mask.height(), w = mask.width();
  auto fg = [&](int r, int c) { return mask.at(r, c) > 0.5; };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!fg(r, c)) continue;
      const bool edge = (r > 0 && !fg(r - 1, c)) || (r + 1 < h && !fg(r + 1, c)) ||
                        (c > 0 && !fg(r, c - 1)) || (c + 1 < w && !fg(r, c + 1));
      if (edge) out.emplace_back(r, c);
    }
  return out;
}

// Fraction of `from` pixels with a `to` pixel within `tol`.
double matched_fraction(const std::vector<std::pair<int, int>>& from, const Image& to_map,
                        double tol) {
  if (from.empty()) return 0.0;
  const int reach = static_cast<int>(std::floor(tol));
  const int h = to_map.height(), w = to_map.width();
  std::size_t hits = 0;
  for (auto [r, c] : from) {
    bool found = false;
    for (int dr = -reach; dr <= reach && !found; ++dr)
      for (int dc = -reach; dc <= reach && !found; ++dc) {
        const int rr = r + dr, cc = c + dc;
        if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
        if (dr * dr + dc * dc <= tol * tol && to_map.at(rr, cc) > 0.5) found = true;
      }
    hits += found;
  }
  return static_cast<double>(hits) / static_cast<double>(from.size());
}

}  // namespace

void TrackerConfig::validate() const {
  if (window < 1) throw ParameterError("tracker: window K must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ParameterError("tracker: threshold must lie in (0, 1)");
  if (joint_radius < 0) throw ParameterError("tracker: joint radius must be >= 0");
}

MaskStack MaskStack::from_labels(const Image& labels, int num_objects) {
  if (labels.channels() != 1) throw DimensionError("mask labels must have one channel");
  if (num_objects < 1) throw ParameterError("mask stack needs at least one object");
  MaskStack m{Image(labels.height(), labels.width(), num_objects)};
  for (int r = 0; r < labels.height(); ++r)
    for (int c = 0; c < labels.width(); ++c) {
      const int id = static_cast<int>(std::lround(labels.at(r, c)));
      if (id >= 1 && id <= num_objects) m.probs.at(r, c, id - 1) = 1.0;
    }
  return m;
}

Image MaskStack::labels(double threshold) const {
  Image out(probs.height(), probs.width(), 1);
  for (int r = 0; r < probs.height(); ++r)
    for (int c = 0; c < probs.width(); ++c) {
      int best = 0;
      double best_p = 0.0;
      for (int o = 0; o < probs.channels(); ++o) {
        const double p = probs.at(r, c, o);
        if (p >= threshold && p > best_p) {
          best = o + 1;
          best_p = p;
        }
      }
      out.at(r, c) = best;
    }
  return out;
}

MaskStack propagate_masks(const std::vector<MaskStack>& history,
                          const std::vector<CoordinateFlow>& flows, const TrackerConfig& cfg) {
  cfg.validate();
  if (history.empty()) throw ParameterError("propagate_masks: empty history");
  if (flows.size() != history.size()) {
    throw DimensionError("propagate_masks: " + std::to_string(history.size()) + " masks but " +
                         std::to_string(flows.size()) + " flows");
  }
  const Image& first = history.front().probs;
  Image avg(first.height(), first.width(), first.channels());
  for (std::size_t i = 0; i < history.size(); ++i) {
    const Image& p = history[i].probs;
    if (!p.same_shape(first)) throw DimensionError("propagate_masks: history masks differ in shape");
    const Image warped = warp_with_flow(p, flows[i]);
    for (std::size_t j = 0; j < avg.size(); ++j) avg.storage()[j] += warped.data()[j];
  }
  for (auto& v : avg.storage()) v /= static_cast<double>(history.size());
  const Image labels = MaskStack{avg}.labels(cfg.threshold);
  return MaskStack::from_labels(labels, first.channels());
}

std::vector<MaskStack> track_masks(const std::vector<CoordinateFlow>& adjacent,
                                   const MaskStack& first, const TrackerConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(adjacent.size()) + 1;
  std::vector<MaskStack> out{first};
  for (int t = 1; t < n; ++t) {
    std::vector<MaskStack> history;
    std::vector<CoordinateFlow> flows;
    const int start = std::max(0, t - cfg.window);
    if (cfg.use_first_frame && start > 0) {
      history.push_back(out.front());
      flows.push_back(long_range_flow(adjacent, 0, t));
    }
    for (int s = start; s < t; ++s) {
      history.push_back(out[static_cast<std::size_t>(s)]);
      flows.push_back(long_range_flow(adjacent, s, t));
    }
    out.push_back(propagate_masks(history, flows, cfg));
  }
  return out;
}

std::vector<MaskStack> track_masks(const std::vector<Image>& frames, const MaskStack& first,
                                   const PairFlowFn& flow_fn, const TrackerConfig& cfg) {
  if (frames.empty()) throw ParameterError("track_masks: no frames");
  std::vector<CoordinateFlow> adjacent;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    require_same_size(frames[t], frames[t + 1], "track_masks");
    adjacent.push_back(flow_fn(frames[t], frames[t + 1]));
  }
  require_same_size(frames.front(), first.probs, "track_masks");
  return track_masks(adjacent, first, cfg);
}

Image joint_heatmap(int height, int width, const Joint& joint, int radius) {
  Image heat(height, width, 1);
  const int r0 = static_cast<int>(std::floor(joint.row)) - radius - 1;
  const int c0 = static_cast<int>(std::floor(joint.col)) - radius - 1;
  for (int r = std::max(0, r0); r <= std::min(height - 1, r0 + 2 * radius + 3); ++r)
    for (int c = std::max(0, c0); c <= std::min(width - 1, c0 + 2 * radius + 3); ++c) {
      const double d = std::hypot(r - joint.row, c - joint.col);
      if (d <= radius + 0.5) heat.at(r, c) = std::max(0.0, 1.0 - d / (radius + 1));
    }
  return heat;
}

std::vector<Joint> propagate_pose(const std::vector<Joint>& joints, const CoordinateFlow& flow,
                                  const TrackerConfig& cfg) {
  cfg.validate();
  std::vector<Joint> out;
  for (const auto& j : joints) {
    if (!j.visible) {
      out.push_back(j);
      continue;
    }
    if (j.row < 0 || j.row > flow.height() - 1 || j.col < 0 || j.col > flow.width() - 1) {
      throw DimensionError("propagate_pose: joint outside the " + std::to_string(flow.height()) +
                           "x" + std::to_string(flow.width()) + " frame");
    }
    const Image heat = joint_heatmap(flow.height(), flow.width(), j, cfg.joint_radius);
    const double peak = *std::max_element(heat.data().begin(), heat.data().end());
    const Image warped = warp_with_flow(heat, flow);
    int br = 0, bc = 0;
    double best = -1.0;
    for (int r = 0; r < warped.height(); ++r)
      for (int c = 0; c < warped.width(); ++c)
        if (warped.at(r, c) > best) {
          best = warped.at(r, c);
          br = r;
          bc = c;
        }
    if (best < 0.5 * peak) {
      out.push_back({j.row, j.col, false});
    } else {
      out.push_back({static_cast<double>(br), static_cast<double>(bc), true});
    }
  }
  return out;
}

std::vector<std::vector<Joint>> track_pose(const std::vector<CoordinateFlow>& adjacent,
                                           const std::vector<Joint>& first,
                                           const TrackerConfig& cfg) {
  std::vector<std::vector<Joint>> out{first};
  for (int t = 1; t <= static_cast<int>(adjacent.size()); ++t) {
    out.push_back(propagate_pose(first, long_range_flow(adjacent, 0, t), cfg));
  }
  return out;
}

void ShotConfig::validate() const {
  if (trailing < 1) throw ParameterError("shots: trailing window must be >= 1");
  if (min_history < 1 || min_history > trailing) {
    throw ParameterError("shots: min_history must lie in [1, trailing]");
  }
  if (!(mad_factor >= 0.0) || !(min_ratio >= 1.0)) throw ParameterError("shots: bad thresholds");
}

std::vector<int> detect_shots_from_errors(const std::vector<double>& errors, const ShotConfig& cfg) {
  cfg.validate();
  std::vector<int> out;
  for (std::size_t t = 0; t < errors.size(); ++t) {
    const std::size_t begin = t > static_cast<std::size_t>(cfg.trailing) ? t - cfg.trailing : 0;
    if (t - begin < static_cast<std::size_t>(cfg.min_history)) continue;
    std::vector<double> window(errors.begin() + static_cast<long>(begin),
                               errors.begin() + static_cast<long>(t));
    const double med = median(window);
    for (auto& v : window) v = std::abs(v - med);
    const double mad = median(window);
    if (errors[t] > med + cfg.mad_factor * mad && errors[t] > cfg.min_ratio * med) {
      out.push_back(static_cast<int>(t) + 1);
    }
  }
  return out;
}

std::vector<double> pair_errors(const std::vector<Image>& frames, const PairSolveFn& solve) {
  std::vector<double> out;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    require_same_size(frames[t], frames[t + 1], "pair_errors");
    const auto res = solve(frames[t], frames[t + 1]);
    const auto& tgt = frames[t + 1];
    double acc = 0.0;
    for (std::size_t i = 0; i < tgt.size(); ++i) acc += charbonnier(res.recon.data()[i] - tgt.data()[i]);
    out.push_back(acc / static_cast<double>(tgt.size()));
  }
  return out;
}

std::vector<int> detect_shots(const std::vector<Image>& frames, const PairSolveFn& solve,
                              const ShotConfig& cfg) {
  if (frames.size() < 3) throw ParameterError("detect_shots: need at least 3 frames");
  return detect_shots_from_errors(pair_errors(frames, solve), cfg);
}

double eval_jaccard(const Image& pred, const Image& gt) {
  require_same_size(pred, gt, "eval_jaccard");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.data()[i] > 0.5, g = gt.data()[i] > 0.5;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double eval_boundary_f(const Image& pred, const Image& gt, double tolerance) {
  require_same_size(pred, gt, "eval_boundary_f");
  if (!(tolerance >= 0.0)) throw ParameterError("eval_boundary_f: tolerance must be >= 0");
  const auto bp = boundary_pixels(pred);
  const auto bg = boundary_pixels(gt);
  if (bp.empty() && bg.empty()) return 1.0;
  Image map_p(pred.height(), pred.width(), 1), map_g(gt.height(), gt.width(), 1);
  for (auto [r, c] : bp) map_p.at(r, c) = 1.0;
  for (auto [r, c] : bg) map_g.at(r, c) = 1.0;
  const double precision = matched_fraction(bp, map_g, tolerance);
  const double recall = matched_fraction(bg, map_p, tolerance);
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

double eval_pck(const std::vector<Joint>& pred, const std::vector<Joint>& gt, double tau,
                double bbox_size) {
  if (pred.size() != gt.size()) {
    throw DimensionError("eval_pck: " + std::to_string(pred.size()) + " predicted joints vs " +
                         std::to_string(gt.size()) + " ground-truth joints");
  }
  if (!(bbox_size > 0.0)) throw ParameterError("eval_pck: bbox size must be positive");
  if (!(tau > 0.0)) throw ParameterError("eval_pck: tau must be positive");
  const double radius = tau * bbox_size;
  std::size_t visible = 0, hits = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt[i].visible) continue;
    ++visible;
    if (pred[i].visible && std::hypot(pred[i].row - gt[i].row, pred[i].col - gt[i].col) <= radius) {
      ++hits;
    }
  }
  if (visible == 0) throw ParameterError("eval_pck: no visible ground-truth joints");
  return static_cast<double>(hits) / static_cast<double>(visible);
}

double recon_l1(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DimensionError("recon_l1: " + dims(a) + " vs " + dims(b));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += std::abs(255.0 * std::clamp(a.data()[i], 0.0, 1.0) - 255.0 * std::clamp(b.data()[i], 0.0, 1.0));
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace mgpff
