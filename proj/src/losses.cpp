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

#include "mgpff/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>

#include "mgpff/errors.hpp"

namespace mgpff {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_pair(const FilterFlowField& field, const Image& src, const Image& tgt,
                const char* what) {
  if (!src.same_shape(tgt) || field.height() != src.height() || field.width() != src.width()) {
    throw DimensionError(std::string(what) + ": field, source and target sizes differ");
  }
}

// Photometric term of apply_filter_flow: loss and dL/dP.
double rec_backward(std::span<const double> probs, int k, const Image& src, const Image& tgt,
                    std::vector<double>* d_probs) {
  const Image recon = apply_filter_flow(probs, k, src);
  const int taps = k * k;
  const int r = k / 2;
  const int c = src.channels();
  const double inv_n = 1.0 / static_cast<double>(src.size());
  long double loss = 0.0;
  std::vector<double> g(static_cast<std::size_t>(c));
  std::size_t p = 0;
  for (int row = 0; row < src.height(); ++row) {
    for (int col = 0; col < src.width(); ++col, ++p) {
      for (int ch = 0; ch < c; ++ch) {
        const double res = tgt.at(row, col, ch) - recon.at(row, col, ch);
        loss += charbonnier(res);
        g[ch] = -charbonnier_grad(res) * inv_n;
      }
      if (d_probs == nullptr) continue;
      double* dw = d_probs->data() + p * taps;
      int t = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx, ++t) {
          double acc = 0.0;
          for (int ch = 0; ch < c; ++ch) acc += g[ch] * src.clamped(row + dy, col + dx, ch);
          dw[t] += acc;
        }
      }
    }
  }
  return static_cast<double>(loss * inv_n);
}

// Warp term: loss and dL/dflow.
double warp_backward(const CoordinateFlow& flow, const Image& src, const Image& tgt,
                     std::vector<double>* d_flow) {
  const int c = src.channels();
  const double inv_n = 1.0 / static_cast<double>(src.size());
  long double loss = 0.0;
  std::size_t p = 0;
  for (int row = 0; row < src.height(); ++row) {
    for (int col = 0; col < src.width(); ++col, ++p) {
      const auto tap = bilinear_tap(src.height(), src.width(), row + flow.d_row(row, col),
                                    col + flow.d_col(row, col));
      double gr = 0.0;
      double gc = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        auto value = [&](int rr, int cc) { return src.at(rr, cc, ch); };
        const double res = tgt.at(row, col, ch) - tap.blend(value);
        loss += charbonnier(res);
        if (d_flow != nullptr) {
          const double g = -charbonnier_grad(res) * inv_n;
          gr += g * tap.d_row(value);
          gc += g * tap.d_col(value);
        }
      }
      if (d_flow != nullptr) {
        (*d_flow)[2 * p] += gr;
        (*d_flow)[2 * p + 1] += gc;
      }
    }
  }
  return static_cast<double>(loss * inv_n);
}

double fb_backward(const CoordinateFlow& f, const CoordinateFlow& b, std::vector<double>* d_f,
                   std::vector<double>* d_b) {
  if (!f.same_shape(b)) throw DimensionError("loss_fb: flow sizes differ");
  const double inv_n = 1.0 / (2.0 * static_cast<double>(f.pixels()));
  long double loss = 0.0;
  std::size_t p = 0;
  for (int row = 0; row < f.height(); ++row) {
    for (int col = 0; col < f.width(); ++col, ++p) {
      const double fr = f.d_row(row, col);
      const double fc = f.d_col(row, col);
      const auto tap = bilinear_tap(b.height(), b.width(), row + fr, col + fc);
      auto b_row = [&](int rr, int cc) { return b.d_row(rr, cc); };
      auto b_col = [&](int rr, int cc) { return b.d_col(rr, cc); };
      const double res_r = fr + tap.blend(b_row);
      const double res_c = fc + tap.blend(b_col);
      loss += charbonnier(res_r) + charbonnier(res_c);
      if (d_f == nullptr) continue;
      const double gr = charbonnier_grad(res_r) * inv_n;
      const double gc = charbonnier_grad(res_c) * inv_n;
      (*d_f)[2 * p] += gr + gr * tap.d_row(b_row) + gc * tap.d_row(b_col);
      (*d_f)[2 * p + 1] += gc + gr * tap.d_col(b_row) + gc * tap.d_col(b_col);
      const double w00 = (1.0 - tap.fy) * (1.0 - tap.fx);
      const double w01 = (1.0 - tap.fy) * tap.fx;
      const double w10 = tap.fy * (1.0 - tap.fx);
      const double w11 = tap.fy * tap.fx;
      auto scatter = [&](int rr, int cc, double wgt) {
        const std::size_t q = static_cast<std::size_t>(rr) * b.width() + cc;
        (*d_b)[2 * q] += wgt * gr;
        (*d_b)[2 * q + 1] += wgt * gc;
      };
      scatter(tap.r0, tap.c0, w00);
      scatter(tap.r0, tap.c1, w01);
      scatter(tap.r1, tap.c0, w10);
      scatter(tap.r1, tap.c1, w11);
    }
  }
  return static_cast<double>(loss * inv_n);
}

double smooth_backward(const CoordinateFlow& f, std::vector<double>* d_f) {
  const int h = f.height();
  const int w = f.width();
  auto data = f.data();
  long double loss = 0.0;
  // Column differences (along a row), then row differences.
  const std::size_t n_col = static_cast<std::size_t>(h) * (w - 1);
  const std::size_t n_row = static_cast<std::size_t>(h - 1) * w;
  if (n_col > 0) {
    const double scale = 0.5 / static_cast<double>(n_col);
    long double part = 0.0;
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col + 1 < w; ++col) {
        const std::size_t p = static_cast<std::size_t>(row) * w + col;
        for (int comp = 0; comp < 2; ++comp) {
          const double diff = data[2 * (p + 1) + comp] - data[2 * p + comp];
          part += std::abs(diff);
          if (d_f != nullptr) {
            (*d_f)[2 * (p + 1) + comp] += scale * sign(diff);
            (*d_f)[2 * p + comp] -= scale * sign(diff);
          }
        }
      }
    }
    loss += part * scale;
  }
  if (n_row > 0) {
    const double scale = 0.5 / static_cast<double>(n_row);
    long double part = 0.0;
    for (int row = 0; row + 1 < h; ++row) {
      for (int col = 0; col < w; ++col) {
        const std::size_t p = static_cast<std::size_t>(row) * w + col;
        const std::size_t q = p + w;
        for (int comp = 0; comp < 2; ++comp) {
          const double diff = data[2 * q + comp] - data[2 * p + comp];
          part += std::abs(diff);
          if (d_f != nullptr) {
            (*d_f)[2 * q + comp] += scale * sign(diff);
            (*d_f)[2 * p + comp] -= scale * sign(diff);
          }
        }
      }
    }
    loss += part * scale;
  }
  return static_cast<double>(loss);
}

double sparse_backward(const CoordinateFlow& f, std::vector<double>* d_f) {
  auto data = f.data();
  const double scale = 1.0 / static_cast<double>(data.size());
  long double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    loss += std::abs(data[i]);
    if (d_f != nullptr) (*d_f)[i] += scale * sign(data[i]);
  }
  return static_cast<double>(loss * scale);
}

// dL/dflow -> dL/dP through the expectation over offsets.
void flow_to_probs_backward(std::span<const double> d_flow, int k, std::vector<double>& d_probs) {
  const int taps = k * k;
  const int r = k / 2;
  const std::size_t n = d_flow.size() / 2;
  for (std::size_t p = 0; p < n; ++p) {
    const double gr = d_flow[2 * p];
    const double gc = d_flow[2 * p + 1];
    double* dw = d_probs.data() + p * taps;
    for (int t = 0; t < taps; ++t) dw[t] += gr * (t / k - r) + gc * (t % k - r);
  }
}

// dL/dP -> dL/dz through the per-pixel softmax.
std::vector<double> softmax_backward(std::span<const double> probs,
                                     std::span<const double> d_probs, int taps) {
  std::vector<double> dz(probs.size());
  const std::size_t n = probs.size() / taps;
  for (std::size_t p = 0; p < n; ++p) {
    const double* w = probs.data() + p * taps;
    const double* g = d_probs.data() + p * taps;
    double dot = 0.0;
    for (int t = 0; t < taps; ++t) dot += w[t] * g[t];
    double* out = dz.data() + p * taps;
    for (int t = 0; t < taps; ++t) out[t] = w[t] * (g[t] - dot);
  }
  return dz;
}

void finalize(LossBreakdown& b, const LossWeights& w) {
  b.total = b.rec + w.fl * b.fl + w.fb * b.fb + w.sm * b.sm + w.sp * b.sp;
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {fl, fb, sm, sp}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ParameterError("loss weights must be finite and non-negative");
    }
  }
}

const char* to_string(Direction d) { return d == Direction::BtoA ? "B->A" : "A->B"; }

double charbonnier(double s) { return std::sqrt(s * s + kCharbonnierEps * kCharbonnierEps); }

double charbonnier_grad(double s) { return s / charbonnier(s); }

std::vector<double> charbonnier(std::span<const double> s) {
  std::vector<double> out(s.size());
  std::transform(s.begin(), s.end(), out.begin(), [](double v) { return charbonnier(v); });
  return out;
}

double loss_rec(const FilterFlowField& field, const Image& src, const Image& tgt) {
  check_pair(field, src, tgt, "loss_rec");
  const auto probs = softmax_filters(field);
  return rec_backward(probs, field.k(), src, tgt, nullptr);
}

double loss_flow_warp(const FilterFlowField& field, const Image& src, const Image& tgt) {
  check_pair(field, src, tgt, "loss_flow_warp");
  return warp_backward(filters_to_flow(field), src, tgt, nullptr);
}

double loss_fb(const CoordinateFlow& f, const CoordinateFlow& b) {
  return fb_backward(f, b, nullptr, nullptr);
}

double loss_smooth(const CoordinateFlow& f) { return smooth_backward(f, nullptr); }

double loss_sparse(const CoordinateFlow& f) { return sparse_backward(f, nullptr); }

std::pair<LossBreakdown, LossBreakdown> total_loss(const FilterFlowField& t_ba,
                                                   const FilterFlowField& t_ab,
                                                   const Image& img_b, const Image& img_a,
                                                   const LossWeights& w) {
  return total_loss(t_ba, t_ab, DirectedPair{img_b, img_a, img_a, img_b}, w);
}

std::pair<LossBreakdown, LossBreakdown> total_loss(const FilterFlowField& t_ba,
                                                   const FilterFlowField& t_ab,
                                                   const DirectedPair& pair,
                                                   const LossWeights& w) {
  w.validate();
  check_pair(t_ba, pair.src_ba, pair.tgt_ba, "total_loss");
  check_pair(t_ab, pair.src_ab, pair.tgt_ab, "total_loss");
  if (t_ba.height() != t_ab.height() || t_ba.width() != t_ab.width()) {
    throw DimensionError("total_loss: direction sizes differ");
  }
  const auto p_ba = softmax_filters(t_ba);
  const auto p_ab = softmax_filters(t_ab);
  const auto f = filters_to_flow(p_ba, t_ba.height(), t_ba.width(), t_ba.k());
  const auto b = filters_to_flow(p_ab, t_ab.height(), t_ab.width(), t_ab.k());

  LossBreakdown ba;
  ba.direction = Direction::BtoA;
  ba.rec = rec_backward(p_ba, t_ba.k(), pair.src_ba, pair.tgt_ba, nullptr);
  ba.fl = warp_backward(f, pair.src_ba, pair.tgt_ba, nullptr);
  ba.fb = loss_fb(f, b);
  ba.sm = loss_smooth(f);
  ba.sp = loss_sparse(f);
  finalize(ba, w);

  LossBreakdown ab;
  ab.direction = Direction::AtoB;
  ab.rec = rec_backward(p_ab, t_ab.k(), pair.src_ab, pair.tgt_ab, nullptr);
  ab.fl = warp_backward(b, pair.src_ab, pair.tgt_ab, nullptr);
  ab.fb = loss_fb(b, f);
  ab.sm = loss_smooth(b);
  ab.sp = loss_sparse(b);
  finalize(ab, w);
  return {ba, ab};
}

ObjectiveEval evaluate_objective(const FilterFlowField& t_ba, const FilterFlowField& t_ab,
                                 const DirectedPair& pair, const LossWeights& w) {
  w.validate();
  check_pair(t_ba, pair.src_ba, pair.tgt_ba, "evaluate_objective");
  check_pair(t_ab, pair.src_ab, pair.tgt_ab, "evaluate_objective");
  if (t_ba.height() != t_ab.height() || t_ba.width() != t_ab.width() || t_ba.k() != t_ab.k()) {
    throw DimensionError("evaluate_objective: direction fields differ in shape");
  }
  const int k = t_ba.k();
  const int h = t_ba.height();
  const int wd = t_ba.width();
  const auto p_ba = softmax_filters(t_ba);
  const auto p_ab = softmax_filters(t_ab);
  const auto f = filters_to_flow(p_ba, h, wd, k);
  const auto b = filters_to_flow(p_ab, h, wd, k);

  std::vector<double> dp_ba(p_ba.size(), 0.0);
  std::vector<double> dp_ab(p_ab.size(), 0.0);
  std::vector<double> df(f.data().size(), 0.0);
  std::vector<double> db(b.data().size(), 0.0);
  std::vector<double> scratch_f(df.size());
  std::vector<double> scratch_b(db.size());

  // Accumulate weight * d(term) into the shared flow gradients.
  auto add_scaled = [](std::vector<double>& dst, std::vector<double>& src, double wgt) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += wgt * src[i];
    std::fill(src.begin(), src.end(), 0.0);
  };
  std::fill(scratch_f.begin(), scratch_f.end(), 0.0);
  std::fill(scratch_b.begin(), scratch_b.end(), 0.0);

  ObjectiveEval out;
  out.ba.direction = Direction::BtoA;
  out.ab.direction = Direction::AtoB;

  out.ba.rec = rec_backward(p_ba, k, pair.src_ba, pair.tgt_ba, &dp_ba);
  out.ab.rec = rec_backward(p_ab, k, pair.src_ab, pair.tgt_ab, &dp_ab);

  out.ba.fl = warp_backward(f, pair.src_ba, pair.tgt_ba, &scratch_f);
  add_scaled(df, scratch_f, w.fl);
  out.ab.fl = warp_backward(b, pair.src_ab, pair.tgt_ab, &scratch_b);
  add_scaled(db, scratch_b, w.fl);

  out.ba.fb = fb_backward(f, b, &scratch_f, &scratch_b);
  add_scaled(df, scratch_f, w.fb);
  add_scaled(db, scratch_b, w.fb);
  out.ab.fb = fb_backward(b, f, &scratch_b, &scratch_f);
  add_scaled(df, scratch_f, w.fb);
  add_scaled(db, scratch_b, w.fb);

  out.ba.sm = smooth_backward(f, &scratch_f);
  add_scaled(df, scratch_f, w.sm);
  out.ab.sm = smooth_backward(b, &scratch_b);
  add_scaled(db, scratch_b, w.sm);

  out.ba.sp = sparse_backward(f, &scratch_f);
  add_scaled(df, scratch_f, w.sp);
  out.ab.sp = sparse_backward(b, &scratch_b);
  add_scaled(db, scratch_b, w.sp);

  finalize(out.ba, w);
  finalize(out.ab, w);

  flow_to_probs_backward(df, k, dp_ba);
  flow_to_probs_backward(db, k, dp_ab);
  out.grad_ba = softmax_backward(p_ba, dp_ba, k * k);
  out.grad_ab = softmax_backward(p_ab, dp_ab, k * k);
  return out;
}

std::pair<std::vector<double>, std::vector<double>> grad_total_wrt_logits(
    const FilterFlowField& t_ba, const FilterFlowField& t_ab, const Image& img_b,
    const Image& img_a, const LossWeights& w) {
  auto eval = evaluate_objective(t_ba, t_ab, DirectedPair{img_b, img_a, img_a, img_b}, w);
  return {std::move(eval.grad_ba), std::move(eval.grad_ab)};
}

std::vector<double> grad_rec(const FilterFlowField& field, const Image& src, const Image& tgt) {
  check_pair(field, src, tgt, "grad_rec");
  const auto probs = softmax_filters(field);
  std::vector<double> dp(probs.size(), 0.0);
  rec_backward(probs, field.k(), src, tgt, &dp);
  return softmax_backward(probs, dp, field.taps());
}

std::vector<double> grad_flow_warp(const FilterFlowField& field, const Image& src,
                                   const Image& tgt) {
  check_pair(field, src, tgt, "grad_flow_warp");
  const auto probs = softmax_filters(field);
  const auto flow = filters_to_flow(probs, field.height(), field.width(), field.k());
  std::vector<double> df(flow.data().size(), 0.0);
  warp_backward(flow, src, tgt, &df);
  std::vector<double> dp(probs.size(), 0.0);
  flow_to_probs_backward(df, field.k(), dp);
  return softmax_backward(probs, dp, field.taps());
}

std::pair<std::vector<double>, std::vector<double>> grad_fb(const FilterFlowField& t_f,
                                                            const FilterFlowField& t_b) {
  const auto pf = softmax_filters(t_f);
  const auto pb = softmax_filters(t_b);
  const auto f = filters_to_flow(pf, t_f.height(), t_f.width(), t_f.k());
  const auto b = filters_to_flow(pb, t_b.height(), t_b.width(), t_b.k());
  std::vector<double> df(f.data().size(), 0.0);
  std::vector<double> db(b.data().size(), 0.0);
  fb_backward(f, b, &df, &db);
  std::vector<double> dpf(pf.size(), 0.0);
  std::vector<double> dpb(pb.size(), 0.0);
  flow_to_probs_backward(df, t_f.k(), dpf);
  flow_to_probs_backward(db, t_b.k(), dpb);
  return {softmax_backward(pf, dpf, t_f.taps()), softmax_backward(pb, dpb, t_b.taps())};
}

namespace {

template <class Backward>
std::vector<double> flow_term_grad(const FilterFlowField& field, Backward&& backward) {
  const auto probs = softmax_filters(field);
  const auto flow = filters_to_flow(probs, field.height(), field.width(), field.k());
  std::vector<double> df(flow.data().size(), 0.0);
  backward(flow, &df);
  std::vector<double> dp(probs.size(), 0.0);
  flow_to_probs_backward(df, field.k(), dp);
  return softmax_backward(probs, dp, field.taps());
}

}  // namespace

std::vector<double> grad_smooth(const FilterFlowField& field) {
  return flow_term_grad(field, smooth_backward);
}

std::vector<double> grad_sparse(const FilterFlowField& field) {
  return flow_term_grad(field, sparse_backward);
}

namespace {

template <class R>
double fd_check(const std::function<R(std::span<const double>)>& fn, std::span<double> x,
                std::span<const double> analytic, double step, std::uint64_t seed, int samples) {
  if (!(step > 0.0)) throw ParameterError("finite_diff_check: step must be positive");
  if (analytic.size() != x.size()) {
    throw DimensionError("finite_diff_check: gradient length differs from parameter length");
  }
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (static_cast<std::size_t>(samples) < order.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(samples));
  }
  double worst = 0.0;
  for (std::size_t i : order) {
    const double saved = x[i];
    const double hi = saved + step;
    const double lo = saved - step;
    x[i] = hi;
    const R up = fn(x);
    x[i] = lo;
    const R down = fn(x);
    x[i] = saved;
    // Divide by the step actually taken after rounding.
    const double numeric = static_cast<double>((up - down) / (static_cast<R>(hi) - static_cast<R>(lo)));
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace

double finite_diff_check(const std::function<double(std::span<const double>)>& fn,
                         std::span<double> x, std::span<const double> analytic, double step,
                         std::uint64_t seed, int samples) {
  return fd_check<double>(fn, x, analytic, step, seed, samples);
}

double finite_diff_check_extended(const std::function<long double(std::span<const double>)>& fn,
                                  std::span<double> x, std::span<const double> analytic,
                                  double step, std::uint64_t seed, int samples) {
  return fd_check<long double>(fn, x, analytic, step, seed, samples);
}

std::string to_csv_row(int iteration, int scale, const LossBreakdown& b) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", iteration, scale,
                to_string(b.direction), b.rec, b.fl, b.fb, b.sm, b.sp, b.total);
  return buf;
}

}  // namespace mgpff
