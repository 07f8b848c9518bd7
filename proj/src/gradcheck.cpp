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

#include "mgpff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mgpff/errors.hpp"
#include "mgpff/losses.hpp"

namespace mgpff {

namespace {

using Real = long double;

// Extended-precision reference of the objective, written directly from the
// loss definitions. It is the function the central differences are taken of,
// so the check does not reuse any production forward code.
struct RefField {
  int h = 0, w = 0, k = 0;
  std::vector<Real> prob;  // pixel-major, taps contiguous
  std::vector<Real> flow;  // (d_row, d_col) per pixel
};

template <class S>
RefField ref_field(std::span<const S> logits, int h, int w, int k) {
  RefField f{h, w, k, std::vector<Real>(logits.size()), std::vector<Real>(2 * static_cast<std::size_t>(h) * w)};
  const int taps = k * k, r = k / 2;
  for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) {
    Real zmax = logits[p * taps];
    for (int t = 1; t < taps; ++t) zmax = std::max<Real>(zmax, logits[p * taps + t]);
    Real sum = 0;
    for (int t = 0; t < taps; ++t) sum += f.prob[p * taps + t] = std::exp(Real(logits[p * taps + t]) - zmax);
    Real dr = 0, dc = 0;
    for (int t = 0; t < taps; ++t) {
      Real& q = f.prob[p * taps + t];
      q /= sum;
      dr += q * (t / k - r);
      dc += q * (t % k - r);
    }
    f.flow[2 * p] = dr;
    f.flow[2 * p + 1] = dc;
  }
  return f;
}

Real phi(Real s) { return std::sqrt(s * s + Real(kCharbonnierEps) * Real(kCharbonnierEps)); }

Real pixel(const Image& img, int r, int c, int ch) {
  r = std::clamp(r, 0, img.height() - 1);
  c = std::clamp(c, 0, img.width() - 1);
  return img.at(r, c, ch);
}

// Bilinear sample with the sample point clamped into the grid.
template <class Get>
Real bilinear(int h, int w, Real row, Real col, Get&& get) {
  row = std::clamp<Real>(row, 0, h - 1);
  col = std::clamp<Real>(col, 0, w - 1);
  const int r0 = std::min(static_cast<int>(std::floor(row)), h - 1);
  const int c0 = std::min(static_cast<int>(std::floor(col)), w - 1);
  const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
  const Real fy = row - r0, fx = col - c0;
  return (1 - fy) * ((1 - fx) * get(r0, c0) + fx * get(r0, c1)) + fy * ((1 - fx) * get(r1, c0) + fx * get(r1, c1));
}

Real ref_rec(const RefField& f, const Image& src, const Image& tgt) {
  const int r = f.k / 2, taps = f.k * f.k;
  Real acc = 0;
  for (int row = 0; row < f.h; ++row)
    for (int col = 0; col < f.w; ++col) {
      const std::size_t p = static_cast<std::size_t>(row) * f.w + col;
      for (int ch = 0; ch < src.channels(); ++ch) {
        Real v = 0;
        for (int t = 0; t < taps; ++t) v += f.prob[p * taps + t] * pixel(src, row + t / f.k - r, col + t % f.k - r, ch);
        acc += phi(tgt.at(row, col, ch) - v);
      }
    }
  return acc / Real(src.size());
}

Real ref_fl(const RefField& f, const Image& src, const Image& tgt) {
  Real acc = 0;
  for (int row = 0; row < f.h; ++row)
    for (int col = 0; col < f.w; ++col) {
      const std::size_t p = static_cast<std::size_t>(row) * f.w + col;
      for (int ch = 0; ch < src.channels(); ++ch) {
        const Real v = bilinear(f.h, f.w, row + f.flow[2 * p], col + f.flow[2 * p + 1],
                                [&](int r, int c) { return Real(src.at(r, c, ch)); });
        acc += phi(tgt.at(row, col, ch) - v);
      }
    }
  return acc / Real(src.size());
}

Real ref_fb(const RefField& f, const RefField& b) {
  Real acc = 0;
  for (int row = 0; row < f.h; ++row)
    for (int col = 0; col < f.w; ++col) {
      const std::size_t p = static_cast<std::size_t>(row) * f.w + col;
      for (int comp = 0; comp < 2; ++comp) {
        const Real back = bilinear(f.h, f.w, row + f.flow[2 * p], col + f.flow[2 * p + 1], [&](int r, int c) {
          return b.flow[2 * (static_cast<std::size_t>(r) * b.w + c) + comp];
        });
        acc += phi(f.flow[2 * p + comp] + back);
      }
    }
  return acc / Real(2 * f.h * f.w);
}

// Half the mean |difference| along columns plus half along rows, each mean
// summing both components.
Real ref_sm(const RefField& f) {
  auto at = [&](int r, int c, int comp) { return f.flow[2 * (static_cast<std::size_t>(r) * f.w + c) + comp]; };
  Real cols = 0, rows = 0;
  for (int r = 0; r < f.h; ++r)
    for (int c = 0; c < f.w; ++c)
      for (int comp = 0; comp < 2; ++comp) {
        if (c + 1 < f.w) cols += std::abs(at(r, c + 1, comp) - at(r, c, comp));
        if (r + 1 < f.h) rows += std::abs(at(r + 1, c, comp) - at(r, c, comp));
      }
  Real out = 0;
  if (f.w > 1) out += cols / (2 * Real(f.h * (f.w - 1)));
  if (f.h > 1) out += rows / (2 * Real((f.h - 1) * f.w));
  return out;
}

Real ref_sp(const RefField& f) {
  Real acc = 0;
  for (Real v : f.flow) acc += std::abs(v);
  return acc / Real(f.flow.size());
}

Real ref_direction(const RefField& f, const RefField& b, const Image& src, const Image& tgt, const LossWeights& w) {
  return ref_rec(f, src, tgt) + w.fl * ref_fl(f, src, tgt) + w.fb * ref_fb(f, b) + w.sm * ref_sm(f) +
         w.sp * ref_sp(f);
}

Real ref_objective(const RefField& ba, const RefField& ab, const Image& b, const Image& a, const LossWeights& w) {
  return ref_direction(ba, ab, b, a, w) + ref_direction(ab, ba, a, b, w);
}

Image random_image(int h, int w, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w, c);
  for (auto& v : img.storage()) v = u(rng);
  return img;
}

FilterFlowField random_field(int h, int w, int k, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FilterFlowField f(h, w, k);
  for (auto& v : f.logits()) v = n(rng);
  return f;
}

template <class T>
std::vector<double> network_gradient(const Params<T>& p, const NetConfig& cfg, const Image& b,
                                     const Image& a, const LossWeights& w) {
  auto pba = forward_pass(p, cfg, b, a);
  auto pab = forward_pass(p, cfg, a, b);
  auto eval = evaluate_objective(pass_field(pba), pass_field(pab), {b, a, a, b}, w);
  auto grads = p.zeros_like();
  backward_pass(pba, eval.grad_ba, grads);
  backward_pass(pab, eval.grad_ab, grads);
  std::vector<double> flat;
  for (const auto& t : grads.tensors) flat.insert(flat.end(), t.data.begin(), t.data.end());
  return flat;
}

}  // namespace

std::vector<GradcheckEntry> loss_gradchecks(std::uint64_t seed, int instances, int size, int k) {
  if (instances < 1 || size < 2) throw ParameterError("gradcheck: need instances >= 1 and size >= 2");
  const double tol = 1e-4, step = 1e-5;
  const LossWeights w;
  std::vector<GradcheckEntry> out;
  for (const char* name : {"rec", "fl", "fb", "sm", "sp", "total"}) out.push_back({name, 0.0, tol, instances});
  // Production forward values against the reference.
  out.push_back({"forward", 0.0, 1e-12, instances});
  auto record = [&](std::size_t i, double err) { out[i].max_rel_error = std::max(out[i].max_rel_error, err); };

  std::mt19937_64 rng(seed);
  const int n = size;
  for (int inst = 0; inst < instances; ++inst) {
    const auto b = random_image(n, n, 2, rng);
    const auto a = random_image(n, n, 2, rng);
    const auto t_ba = random_field(n, n, k, rng);
    const auto t_ab = random_field(n, n, k, rng);
    const std::uint64_t sub = rng();
    const std::size_t m = t_ba.logits().size();

    auto one = [&](std::span<const double> v) { return ref_field(v, n, n, k); };
    std::vector<double> xs(t_ba.logits().begin(), t_ba.logits().end());
    std::vector<double> x2(xs);
    x2.insert(x2.end(), t_ab.logits().begin(), t_ab.logits().end());

    record(0, finite_diff_check_extended([&](auto v) { return ref_rec(one(v), b, a); }, xs,
                                         grad_rec(t_ba, b, a), step, sub));
    record(1, finite_diff_check_extended([&](auto v) { return ref_fl(one(v), b, a); }, xs,
                                         grad_flow_warp(t_ba, b, a), step, sub));
    auto [gf, gb] = grad_fb(t_ba, t_ab);
    gf.insert(gf.end(), gb.begin(), gb.end());
    record(2, finite_diff_check_extended([&](auto v) { return ref_fb(one(v.subspan(0, m)), one(v.subspan(m))); },
                                         x2, gf, step, sub));
    record(3, finite_diff_check_extended([&](auto v) { return ref_sm(one(v)); }, xs, grad_smooth(t_ba), step, sub));
    record(4, finite_diff_check_extended([&](auto v) { return ref_sp(one(v)); }, xs, grad_sparse(t_ba), step, sub));
    auto [g_ba, g_ab] = grad_total_wrt_logits(t_ba, t_ab, b, a, w);
    g_ba.insert(g_ba.end(), g_ab.begin(), g_ab.end());
    record(5, finite_diff_check_extended(
                  [&](auto v) { return ref_objective(one(v.subspan(0, m)), one(v.subspan(m)), b, a, w); }, x2,
                  g_ba, step, sub));

    auto [lba, lab] = total_loss(t_ba, t_ab, b, a, w);
    const double prod = lba.total + lab.total;
    const double ref = static_cast<double>(ref_objective(one(xs), one({x2.data() + m, m}), b, a, w));
    record(6, std::abs(prod - ref) / std::max(std::abs(ref), 1e-300));
  }
  return out;
}

GradcheckEntry network_gradcheck(const NetConfig& cfg, int size, std::uint64_t seed, int samples,
                                 bool single_precision) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const auto b = random_image(size, size, cfg.in_channels, rng);
  const auto a = random_image(size, size, cfg.in_channels, rng);
  const LossWeights w;
  const auto pf = init_params(cfg);
  // Evaluate everything at float-representable weights so both routes see
  // the same point.
  const auto pd = cast_params<double>(pf);
  const auto analytic = single_precision ? network_gradient(pf, cfg, b, a, w) : network_gradient(pd, cfg, b, a, w);
  std::vector<double> flat;
  for (const auto& t : pd.tensors) flat.insert(flat.end(), t.data.begin(), t.data.end());
  auto q = cast_params<long double>(pf);
  auto fn = [&](std::span<const double> v) {
    std::size_t i = 0;
    for (auto& t : q.tensors)
      for (auto& x : t.data) x = v[i++];
    const auto ba = pass_logits(forward_pass(q, cfg, b, a));
    const auto ab = pass_logits(forward_pass(q, cfg, a, b));
    const auto fba = ref_field<long double>(ba, size, size, cfg.k);
    const auto fab = ref_field<long double>(ab, size, size, cfg.k);
    return ref_objective(fba, fab, b, a, w);
  };
  GradcheckEntry e{single_precision ? "network_f32" : "network_f64", 0.0,
                   single_precision ? 1e-3 : 1e-4, 1};
  e.max_rel_error = finite_diff_check_extended(fn, flat, analytic, 1e-6, rng(), samples);
  return e;
}

}  // namespace mgpff
