#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mgpff/errors.hpp"
#include "mgpff/gradcheck.hpp"
#include "mgpff/losses.hpp"
#include "mgpff/predictor.hpp"
#include "test_util.hpp"

using namespace mgpff;
using mgpff::testing::random_image;

namespace {

NetConfig small_config(int k = 3) {
  NetConfig cfg = NetConfig::for_kernel(k);
  cfg.embed_channels = {4, 6, 4};
  cfg.full_res_channels = 3;
  cfg.head_channels = {6, k * k};
  cfg.seed = 5;
  return cfg;
}

Image shift_cols(const Image& src, int by) {
  Image out(src.height(), src.width(), src.channels());
  for (int r = 0; r < src.height(); ++r)
    for (int c = 0; c < src.width(); ++c) out.at(r, c) = src.clamped(r, c - by);
  return out;
}

template <class T>
double net_objective(const Params<T>& p, const NetConfig& cfg, const Image& b, const Image& a) {
  auto ba = pass_field(forward_pass(p, cfg, b, a));
  auto ab = pass_field(forward_pass(p, cfg, a, b));
  return evaluate_objective(ba, ab, {b, a, a, b}, LossWeights{}).objective();
}

// Analytic gradient of the bidirectional objective through the network.
template <class T>
std::vector<double> net_gradient(const Params<T>& p, const NetConfig& cfg, const Image& b,
                                 const Image& a) {
  auto pba = forward_pass(p, cfg, b, a);
  auto pab = forward_pass(p, cfg, a, b);
  auto eval = evaluate_objective(pass_field(pba), pass_field(pab), {b, a, a, b}, LossWeights{});
  auto grads = p.zeros_like();
  backward_pass(pba, eval.grad_ba, grads);
  backward_pass(pab, eval.grad_ab, grads);
  std::vector<double> flat;
  for (const auto& t : grads.tensors) flat.insert(flat.end(), t.data.begin(), t.data.end());
  return flat;
}

template <class T>
void unflatten(std::span<const double> x, Params<T>& p) {
  std::size_t i = 0;
  for (auto& t : p.tensors)
    for (auto& v : t.data) v = static_cast<T>(x[i++]);
}

}  // namespace

TEST_CASE("init_params") {
  NetConfig cfg;
  auto a = init_params(cfg);
  auto b = init_params(cfg);
  CHECK(a == b);
  cfg.seed = 1;
  CHECK_FALSE(init_params(cfg) == a);

  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& t = a.tensors[i];
    if (t.shape.size() == 1) {
      for (float v : t.data) CHECK(v == 0.0f);
      continue;
    }
    const double bound = std::sqrt(6.0 / (t.dim(1) * t.dim(2) * t.dim(3)));
    for (float v : t.data) CHECK(std::abs(v) <= bound);
  }
  CHECK(a.tensors.back().dim(0) == 49);

  NetConfig bad;
  bad.head_channels = {32, 48};
  CHECK_THROWS_AS(init_params(bad), ParameterError);
  bad = NetConfig::for_kernel(4);
  CHECK_THROWS_AS(init_params(bad), ParameterError);
}

TEST_CASE("forward shapes and zero head") {
  NetConfig cfg;
  Model model{cfg, init_params(cfg)};
  auto a = random_image(64, 64, 1, 1);
  auto b = random_image(64, 64, 1, 2);
  auto pass = forward_pass(model.params, cfg, a, b);
  CHECK(pass.tape.value(pass.logits).shape == std::vector<int>{49, 64, 64});
  auto field = pass_field(pass);
  CHECK(field.height() == 64);
  CHECK(field.width() == 64);
  CHECK(field.k() == 7);

  // Odd sizes are padded internally and cropped back.
  auto odd = predict_filters(model, random_image(13, 10, 1, 3), random_image(13, 10, 1, 4));
  CHECK(odd.height() == 13);
  CHECK(odd.width() == 10);

  auto last_w = model.params.size() - 2;
  for (auto& v : model.params.tensors[last_w].data) v = 0.0f;
  auto zero = predict_filters(model, a, b);
  for (double v : zero.logits()) CHECK(v == 0.0);
  auto flow = filters_to_flow(zero);
  for (double v : flow.data()) CHECK(std::abs(v) < 1e-12);

  CHECK_THROWS_AS(predict_filters(model, a, random_image(64, 32, 1, 5)), DimensionError);
  CHECK_THROWS_AS(predict_filters(model, random_image(8, 8, 3, 1), random_image(8, 8, 3, 2)),
                  DimensionError);
}

TEST_CASE("direction sensitivity") {
  auto cfg = small_config();
  Model model{cfg, init_params(cfg)};
  auto a = random_image(16, 16, 1, 1);
  auto b = random_image(16, 16, 1, 2);
  auto ab = predict_filters(model, a, b);
  auto ba = predict_filters(model, b, a);
  double diff = 0.0;
  for (std::size_t i = 0; i < ab.logits().size(); ++i)
    diff = std::max(diff, std::abs(ab.logits()[i] - ba.logits()[i]));
  CHECK(diff > 1e-3);
}

TEST_CASE("translation covariance") {
  auto cfg = small_config();
  Model model{cfg, init_params(cfg)};
  const int n = 48;
  auto a = random_image(n, n, 1, 1);
  auto b = random_image(n, n, 1, 2);
  // Shift by the pooling period so the pyramid grid is preserved.
  const int s = cfg.size_multiple() * 2;
  auto f0 = predict_filters(model, a, b);
  auto f1 = predict_filters(model, shift_cols(a, s), shift_cols(b, s));
  const int taps = cfg.k * cfg.k;
  // Receptive-field radius of the small net plus the replicate padding reach.
  const int border = 12 + s;
  double worst = 0.0;
  for (int r = border; r < n - border; ++r)
    for (int c = border; c + s < n - border; ++c)
      for (int t = 0; t < taps; ++t)
        worst = std::max(worst, std::abs(f1.logit(static_cast<std::size_t>(r * n + c + s), t) -
                                         f0.logit(static_cast<std::size_t>(r * n + c), t)));
  CHECK(worst < 1e-5);
}

TEST_CASE("tape single conv gradient is a correlation") {
  const int c_in = 2, c_out = 3, h = 5, w = 6;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor<double> x({c_in, h, w}), wt({c_out, c_in, 3, 3}), bias({c_out}), up({c_out, h, w});
  for (auto* t : {&x, &wt, &bias, &up})
    for (auto& v : t->data) v = n(rng);

  Params<double> params;
  params.names = {"w", "b"};
  params.tensors = {wt, bias};
  Tape<double> tape;
  auto xv = tape.input(x);
  auto out = tape.conv2d(xv, tape.param(0, wt), tape.param(1, bias));

  // Forward against a direct zero-padded correlation.
  auto px = [&](int ci, int r, int c) {
    return (r < 0 || r >= h || c < 0 || c >= w) ? 0.0 : x.data[(ci * h + r) * w + c];
  };
  for (int co = 0; co < c_out; ++co)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        double acc = bias.data[co];
        for (int ci = 0; ci < c_in; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              acc += wt.data[((co * c_in + ci) * 3 + ky) * 3 + kx] * px(ci, r + ky - 1, c + kx - 1);
        CHECK(tape.value(out).data[(co * h + r) * w + c] == doctest::Approx(acc).epsilon(1e-12));
      }

  auto grads = params.zeros_like();
  tape.backward(out, up, grads);
  for (int co = 0; co < c_out; ++co) {
    double bsum = 0.0;
    for (int p = 0; p < h * w; ++p) bsum += up.data[co * h * w + p];
    CHECK(grads.tensors[1].data[co] == doctest::Approx(bsum).epsilon(1e-12));
    for (int ci = 0; ci < c_in; ++ci)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          double corr = 0.0;
          for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
              corr += up.data[(co * h + r) * w + c] * px(ci, r + ky - 1, c + kx - 1);
          CHECK(grads.tensors[0].data[((co * c_in + ci) * 3 + ky) * 3 + kx] ==
                doctest::Approx(corr).epsilon(1e-12));
        }
  }

  auto zero = params.zeros_like();
  Tape<double> t2;
  auto o2 = t2.conv2d(t2.input(x), t2.param(0, wt), t2.param(1, bias));
  t2.backward(o2, Tensor<double>({c_out, h, w}), zero);
  for (const auto& t : zero.tensors)
    for (double v : t.data) CHECK(v == 0.0);

  CHECK_THROWS_AS(t2.backward(o2, Tensor<double>({c_out, h, w + 1}), zero), DimensionError);
  CHECK_THROWS_AS(t2.conv2d(t2.input(Tensor<double>({c_in + 1, h, w})), 1, 2), DimensionError);
}

TEST_CASE("tape primitives against finite differences") {
  // Every op in one small graph; scalar = sum(upstream * out).
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  Params<double> p;
  p.names = {"w0", "b0", "w1", "b1"};
  p.tensors = {Tensor<double>({3, 2, 3, 3}), Tensor<double>({3}), Tensor<double>({2, 6, 3, 3}),
               Tensor<double>({2})};
  for (auto& t : p.tensors)
    for (auto& v : t.data) v = 0.5 * n(rng);
  Tensor<double> x({2, 8, 8});
  for (auto& v : x.data) v = n(rng);
  Tensor<double> up({2, 8, 8});
  for (auto& v : up.data) v = n(rng);

  auto build = [&](const Params<double>& q, Tape<double>& tape) {
    auto xi = tape.input(x);
    auto w0 = tape.param(0, q.tensors[0]), b0 = tape.param(1, q.tensors[1]);
    auto w1 = tape.param(2, q.tensors[2]), b1 = tape.param(3, q.tensors[3]);
    auto h = tape.relu(tape.conv2d(xi, w0, b0));
    auto low = tape.upsample2(tape.avg_pool2(h));
    auto sum = tape.add(h, low);
    return tape.conv2d(tape.concat(sum, h), w1, b1);
  };
  auto scalar = [&](const Params<double>& q) {
    Tape<double> tape;
    const auto& v = tape.value(build(q, tape)).data;
    return std::inner_product(v.begin(), v.end(), up.data.begin(), 0.0);
  };

  Tape<double> tape;
  auto out = build(p, tape);
  auto g = p.zeros_like();
  tape.backward(out, up, g);
  std::vector<double> flat, analytic;
  for (std::size_t i = 0; i < p.size(); ++i) {
    flat.insert(flat.end(), p.tensors[i].data.begin(), p.tensors[i].data.end());
    analytic.insert(analytic.end(), g.tensors[i].data.begin(), g.tensors[i].data.end());
  }
  auto q = p;
  double err = finite_diff_check(
      [&](std::span<const double> v) {
        unflatten(v, q);
        return scalar(q);
      },
      flat, analytic, 1e-6, 1, 1000);
  CHECK(err < 1e-6);
}

TEST_CASE("network gradient against finite differences") {
  auto cfg = NetConfig::for_kernel(3);
  cfg.seed = 2;
  auto pf = init_params(cfg);
  auto b = random_image(16, 16, 1, 7);
  auto a = random_image(16, 16, 1, 8);

  auto pd = cast_params<double>(pf);
  std::vector<double> flat;
  for (const auto& t : pd.tensors) flat.insert(flat.end(), t.data.begin(), t.data.end());
  auto q = pd;
  auto fn = [&](std::span<const double> v) {
    unflatten(v, q);
    return net_objective(q, cfg, b, a);
  };
  // Central differences of a double forward are roundoff-limited at this
  // curvature; the double backward is measured against the long double route.
  CHECK(network_gradcheck(cfg, 16, 3, 200, false).max_rel_error < 1e-4);

  auto analytic_f = net_gradient(pf, cfg, b, a);
  CHECK(finite_diff_check(fn, flat, analytic_f, 1e-6, 3, 200) < 1e-3);
}

TEST_CASE("adam") {
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  std::vector<double> x{1.0, -2.0, 0.5};
  std::vector<double> m, v;
  long step = 0;
  std::vector<double> zero(3, 0.0);
  adam_step(x, zero, m, v, step, cfg);
  CHECK(step == 1);
  CHECK(x == std::vector<double>{1.0, -2.0, 0.5});

  // One bias-corrected step from zero moments: -lr * g / (|g| + eps).
  x = {0.0, 0.0, 0.0};
  m.clear();
  v.clear();
  step = 0;
  std::vector<double> g{0.3, -4.0, 1e-3};
  adam_step(x, g, m, v, step, cfg);
  for (int i = 0; i < 3; ++i)
    CHECK(x[i] == doctest::Approx(-0.01 * g[i] / (std::abs(g[i]) + 1e-8)).epsilon(1e-12));

  // Constant gradient: the update settles at lr per step.
  std::vector<double> y{0.0};
  std::vector<double> my, vy;
  long sy = 0;
  std::vector<double> gc{2.5};
  double prev = 0.0, delta = 0.0;
  for (int i = 0; i < 2000; ++i) {
    adam_step(y, gc, my, vy, sy, cfg);
    delta = prev - y[0];
    prev = y[0];
  }
  CHECK(delta == doctest::Approx(0.01).epsilon(1e-6));

  auto ncfg = small_config();
  auto params = init_params(ncfg);
  auto before = params;
  AdamState state;
  AdamConfig lr0;
  lr0.learning_rate = 0.0;
  auto grads = params.zeros_like();
  for (auto& t : grads.tensors)
    for (auto& e : t.data) e = 1.0f;
  adam_step(params, grads, state, lr0);
  CHECK(params == before);
  CHECK(state.step == 1);
  AdamState fresh;
  adam_step(params, params.zeros_like(), fresh, AdamConfig{});
  CHECK(params == before);
  CHECK(fresh.step == 1);

  auto wrong = grads;
  wrong.tensors.pop_back();
  CHECK_THROWS_AS(adam_step(params, wrong, state, AdamConfig{}), DimensionError);
  AdamConfig bad;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("clip_grad_norm") {
  auto cfg = small_config();
  auto g = init_params(cfg).zeros_like();
  g.tensors[0].data[0] = 30.0f;
  g.tensors[1].data[0] = 40.0f;
  CHECK(clip_grad_norm(g, 10.0) == doctest::Approx(50.0));
  CHECK(g.tensors[0].data[0] == doctest::Approx(6.0));
  CHECK(g.tensors[1].data[0] == doctest::Approx(8.0));
  CHECK(clip_grad_norm(g, 100.0) == doctest::Approx(10.0));
  CHECK(g.tensors[0].data[0] == doctest::Approx(6.0));
}
