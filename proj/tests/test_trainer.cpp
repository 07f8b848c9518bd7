#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mgpff/errors.hpp"
#include "mgpff/synth.hpp"
#include "mgpff/trainer.hpp"
#include "test_util.hpp"

using namespace mgpff;

namespace {

Model small_model(int k = 3) {
  NetConfig cfg = NetConfig::for_kernel(k);
  cfg.embed_channels = {4, 6, 4};
  cfg.full_res_channels = 3;
  cfg.head_channels = {6, k * k};
  cfg.seed = 2;
  return {cfg, init_params(cfg)};
}

Corpus small_corpus(int sequences = 2) {
  Corpus c;
  for (int s = 0; s < sequences; ++s) c.sequences.push_back(render_scene(training_scene_config(s + 1, 16, 4, 4)).frames);
  return c;
}

}  // namespace

TEST_CASE("augment_image rotates and flips") {
  const auto img = testing::ramp_image(2, 3);
  const auto q1 = augment_image(img, false, false, 1);
  REQUIRE(q1.height() == 3);
  REQUIRE(q1.width() == 2);
  CHECK(q1.at(0, 0) == img.at(0, 2));
  CHECK(q1.at(2, 1) == img.at(1, 0));
  CHECK(augment_image(augment_image(img, false, false, 1), false, false, 3) == img);
  CHECK(augment_image(augment_image(img, true, true, 0), true, true, 0) == img);
  CHECK(augment_image(img, true, false, 0).at(0, 0) == img.at(0, 2));
  CHECK(augment_image(img, false, true, 0).at(0, 0) == img.at(1, 0));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto model = small_model();
  TrainConfig cfg;
  cfg.iterations = 3;
  cfg.adam.learning_rate = 0.0;
  const auto res = train(small_corpus(), model, cfg, {2, 3});
  CHECK(res.params == model.params);
  CHECK(res.totals.size() == 3);
  // Two scales, one row each per iteration.
  CHECK(res.log.size() == 6);
}

TEST_CASE("training is deterministic and moves the loss") {
  const auto model = small_model();
  const auto corpus = small_corpus();
  TrainConfig cfg;
  cfg.iterations = 4;
  cfg.adam.learning_rate = 0.01;
  cfg.seed = 5;
  int checkpoints = 0;
  TrainHooks hooks;
  hooks.checkpoint = [&](int, const PredictorParams&) { ++checkpoints; };
  cfg.checkpoint_every = 2;
  const auto a = train(corpus, model, cfg, {2, 3}, hooks);
  const auto b = train(corpus, model, cfg, {2, 3});
  CHECK(a.params == b.params);
  CHECK(a.totals == b.totals);
  CHECK_FALSE(a.params == model.params);
  CHECK(checkpoints == 2);
  for (double t : a.totals) CHECK(std::isfinite(t));
}

TEST_CASE("pair gradient covers every scale") {
  const auto model = small_model();
  const auto seq = render_scene(training_scene_config(3, 16, 2, 4)).frames;
  auto grads = model.params.zeros_like();
  const auto rows = accumulate_pair_gradient(model, seq[0], seq[1], {2, 3}, LossWeights{}, grads);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].scale == 2);
  CHECK(rows[1].scale == 1);
  double norm = 0.0;
  for (const auto& t : grads.tensors)
    for (float v : t.data) norm += static_cast<double>(v) * v;
  CHECK(norm > 0.0);
  CHECK_THROWS_AS(accumulate_pair_gradient(model, seq[0], seq[1], {2, 5}, LossWeights{}, grads),
                  ParameterError);
}

TEST_CASE("train rejects bad input") {
  const auto model = small_model();
  TrainConfig cfg;
  cfg.iterations = 1;
  Corpus empty;
  CHECK_THROWS(train(empty, model, cfg, {2, 3}));
  Corpus mixed = small_corpus(1);
  mixed.sequences.push_back({Image(8, 8, 1), Image(8, 8, 1)});
  CHECK_THROWS_AS(train(mixed, model, cfg, {2, 3}), DimensionError);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(small_corpus(1), model, cfg, {2, 3}), ParameterError);
}

TEST_CASE("train log has two rows per scale record") {
  testing::TempDir dir("log");
  std::vector<TrainLogRow> log(3);
  write_train_log(log, dir.file("log.csv"));
  const auto text = testing::slurp(dir.file("log.csv"));
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
}
