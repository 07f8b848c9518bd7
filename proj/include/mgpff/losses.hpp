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
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mgpff/filter_flow.hpp"
#include "mgpff/grid.hpp"

namespace mgpff {

inline constexpr double kCharbonnierEps = 0.001;

struct LossWeights {
  double fl = 1.0;
  double fb = 0.1;
  double sm = 0.01;
  double sp = 0.001;

  void validate() const;
};

enum class Direction { BtoA, AtoB };

const char* to_string(Direction d);

struct LossBreakdown {
  double rec = 0.0;
  double fl = 0.0;
  double fb = 0.0;
  double sm = 0.0;
  double sp = 0.0;
  double total = 0.0;
  Direction direction = Direction::BtoA;
};

// sqrt(s^2 + eps^2)
double charbonnier(double s);
std::vector<double> charbonnier(std::span<const double> s);
// d/ds charbonnier(s)
double charbonnier_grad(double s);

// Mean Charbonnier of tgt - apply_filter_flow(field, src) over pixels and channels.
double loss_rec(const FilterFlowField& field, const Image& src, const Image& tgt);
// Mean Charbonnier of tgt - warp_with_flow(src, filters_to_flow(field)).
double loss_flow_warp(const FilterFlowField& field, const Image& src, const Image& tgt);
// Round-trip residual r(p) = f(p) + b(p + f(p)); mean of Charbonnier over
// pixels and both components.
double loss_fb(const CoordinateFlow& f, const CoordinateFlow& b);
// Half the sum of the column-difference and row-difference means of
// |d_row| + |d_col| forward differences.
double loss_smooth(const CoordinateFlow& f);
// Mean of |d_row| and |d_col| over pixels and components.
double loss_sparse(const CoordinateFlow& f);

// The sources and targets of the two directions of one scale. With no
// warping src_ba = tgt_ab = I_B and tgt_ba = src_ab = I_A; inside the
// multigrid loop each source is the previously warped frame.
struct DirectedPair {
  const Image& src_ba;
  const Image& tgt_ba;
  const Image& src_ab;
  const Image& tgt_ab;
};

std::pair<LossBreakdown, LossBreakdown> total_loss(const FilterFlowField& t_ba,
                                                   const FilterFlowField& t_ab,
                                                   const Image& img_b, const Image& img_a,
                                                   const LossWeights& w);
std::pair<LossBreakdown, LossBreakdown> total_loss(const FilterFlowField& t_ba,
                                                   const FilterFlowField& t_ab,
                                                   const DirectedPair& pair, const LossWeights& w);

struct ObjectiveEval {
  LossBreakdown ba;
  LossBreakdown ab;
  std::vector<double> grad_ba;  // d(ba.total + ab.total) / d logits of t_ba
  std::vector<double> grad_ab;

  double objective() const { return ba.total + ab.total; }
};

// Loss breakdowns of both directions and the exact gradient of their summed
// totals with respect to both logit grids.
ObjectiveEval evaluate_objective(const FilterFlowField& t_ba, const FilterFlowField& t_ab,
                                 const DirectedPair& pair, const LossWeights& w);

std::pair<std::vector<double>, std::vector<double>> grad_total_wrt_logits(
    const FilterFlowField& t_ba, const FilterFlowField& t_ab, const Image& img_b,
    const Image& img_a, const LossWeights& w);

// Single-term gradients with respect to the logits of the field(s) involved.
std::vector<double> grad_rec(const FilterFlowField& field, const Image& src, const Image& tgt);
std::vector<double> grad_flow_warp(const FilterFlowField& field, const Image& src,
                                   const Image& tgt);
std::pair<std::vector<double>, std::vector<double>> grad_fb(const FilterFlowField& t_f,
                                                            const FilterFlowField& t_b);
std::vector<double> grad_smooth(const FilterFlowField& field);
std::vector<double> grad_sparse(const FilterFlowField& field);

// Central-difference gradient check. Compares `analytic` against
// (f(x + h e_i) - f(x - h e_i)) / 2h on a random subsample of `samples`
// coordinates (all of them when fewer) and returns the max relative error
// |a - n| / max(|a|, |n|, 1e-8). `x` is restored before returning.
double finite_diff_check(const std::function<double(std::span<const double>)>& fn,
                         std::span<double> x, std::span<const double> analytic, double step,
                         std::uint64_t seed = 0, int samples = 200);

// Variant for a function evaluated in extended precision. The difference
// quotient is formed in long double so round-off in the function value does
// not swamp small gradient components.
double finite_diff_check_extended(const std::function<long double(std::span<const double>)>& fn,
                                  std::span<double> x, std::span<const double> analytic,
                                  double step, std::uint64_t seed = 0, int samples = 200);

std::string to_csv_row(int iteration, int scale, const LossBreakdown& b);
inline constexpr const char* kLossCsvHeader = "iteration,scale,direction,rec,fl,fb,sm,sp,total";

}  // namespace mgpff
