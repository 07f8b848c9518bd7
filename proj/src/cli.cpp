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

#include "mgpff/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "CLI11.hpp"
#include "mgpff/errors.hpp"
#include "mgpff/gradcheck.hpp"
#include "mgpff/io.hpp"
#include "mgpff/multigrid.hpp"
#include "mgpff/synth.hpp"
#include "mgpff/tracker.hpp"
#include "mgpff/trainer.hpp"

namespace mgpff {

namespace {

namespace fs = std::filesystem;

std::string fmt_value(const std::string& v) { return v; }
std::string fmt_value(bool v) { return v ? "true" : "false"; }
std::string fmt_value(int v) { return std::to_string(v); }
std::string fmt_value(std::uint64_t v) { return std::to_string(v); }
std::string fmt_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
std::string fmt_value(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04zu%s", stem, i, ext);
  return buf;
}

// Options of one subcommand. Remembers how to print each resolved value so
// the manifest can be fed back through --config.
class OptionSet {
 public:
  explicit OptionSet(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path, "key = value file; flags given on the command line win");
  }

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& desc) {
    auto* o = app_->add_option(name, var, desc);
    if constexpr (std::is_same_v<T, std::vector<std::string>>) o->delimiter(',');
    track(o, [&var] { return fmt_value(var); });
    return o;
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
    auto* o = app_->add_flag(name, var, desc);
    track(o, [&var] { return fmt_value(var); });
    return o;
  }

  void apply_config(const std::vector<std::pair<std::string, std::string>>& entries) {
    for (const auto& [key, value] : entries) {
      auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.key == key; });
      if (it == entries_.end()) {
        throw ConfigError("config key '" + key + "' is not an option of '" + app_->get_name() + "'");
      }
      if (it->opt->count() > 0 || value.empty()) continue;
      it->opt->add_result(value);
      it->opt->run_callback();
    }
  }

  std::vector<std::pair<std::string, std::string>> resolved() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : entries_) out.emplace_back(e.key, e.value());
    return out;
  }

  std::string config_path;

 private:
  struct Entry {
    std::string key;
    CLI::Option* opt;
    std::function<std::string()> value;
  };

  void track(CLI::Option* o, std::function<std::string()> value) {
    entries_.push_back({o->get_lnames().front(), o, std::move(value)});
  }

  CLI::App* app_;
  std::vector<Entry> entries_;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

void require(const std::string& value, const std::string& what) {
  if (value.empty()) throw UsageError("missing required argument: " + what);
}

struct Context {
  std::ostream& out;
  std::string dir;
  RunManifest manifest;
  std::vector<std::pair<std::string, std::string>> notes;

  std::string path(const std::string& name) {
    manifest.outputs.push_back(name);
    return (fs::path(dir) / name).string();
  }
};

// A directory written by `synth` also holds masks, so frames_* files win
// when present.
std::vector<Image> load_frames(const std::string& dir) {
  auto files = list_images(dir);
  std::vector<std::string> named;
  for (const auto& f : files)
    if (fs::path(f).filename().string().rfind("frames_", 0) == 0) named.push_back(f);
  if (!named.empty()) files = named;
  if (files.empty()) throw IoError("no images in '" + dir + "'");
  std::vector<Image> frames;
  for (const auto& f : files) frames.push_back(read_image(f));
  for (const auto& f : frames)
    if (!f.same_shape(frames.front())) throw DimensionError("frames in '" + dir + "' differ in size");
  return frames;
}

void add_weight_options(OptionSet& o, LossWeights& w) {
  o.add("--lambda-fl", w.fl, "weight of the warp reconstruction term");
  o.add("--lambda-fb", w.fb, "weight of the forward-backward term");
  o.add("--lambda-sm", w.sm, "weight of the smoothness term");
  o.add("--lambda-sp", w.sp, "weight of the sparsity term");
}

void write_losses(const MultigridResult& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << kLossCsvHeader << "\n";
  for (const auto& s : r.scales) {
    f << to_csv_row(0, s.scale_index, s.loss_ba) << "\n" << to_csv_row(0, s.scale_index, s.loss_ab) << "\n";
  }
}

// Flow estimator shared by the video commands: a trained model when --model
// is given, the direct solver otherwise.
struct FlowSource {
  std::string model_path;
  int levels = 3;
  int k = 7;
  SolverOptions solver;
  std::shared_ptr<Model> model;

  void add(OptionSet& o) {
    o.add("--model", model_path, "checkpoint; omit to use the direct solver");
    o.add("--levels", levels, "pyramid levels");
    o.add("--kernel", k, "filter size of the direct solver");
    o.add("--iterations", solver.iterations, "solver iterations per scale");
    o.add("--lr", solver.learning_rate, "solver learning rate");
    add_weight_options(o, solver.weights);
  }

  PairSolveFn solve_fn() {
    if (!model_path.empty()) {
      model = std::make_shared<Model>(load_checkpoint(model_path));
      const PyramidConfig cfg{levels, model->config.k};
      cfg.validate();
      auto m = model;
      return [m, cfg](const Image& src, const Image& tgt) { return infer_network(*m, src, tgt, cfg); };
    }
    const PyramidConfig cfg{levels, k};
    cfg.validate();
    solver.validate();
    auto opt = solver;
    return [cfg, opt](const Image& src, const Image& tgt) { return solve_direct(src, tgt, cfg, opt); };
  }

  PairFlowFn flow_fn() {
    auto solve = solve_fn();
    return [solve](const Image& src, const Image& tgt) { return solve(src, tgt).cropped_flow(); };
  }
};

std::vector<CoordinateFlow> adjacent_flows(const std::vector<Image>& frames, const PairFlowFn& fn) {
  std::vector<CoordinateFlow> flows;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) flows.push_back(fn(frames[t], frames[t + 1]));
  return flows;
}

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<OptionSet> opts;
  std::string out_dir;
  std::function<void(Context&)> run;
};

// ---- subcommands ----

void setup_synth(Command& c) {
  auto& o = *c.opts;
  auto cfg = std::make_shared<SynthSceneConfig>();
  auto kinds = std::make_shared<std::vector<std::string>>(std::vector<std::string>{"rect"});
  auto motion = std::make_shared<std::string>("translation");
  auto texture = std::make_shared<std::string>("noise");
  auto bg_texture = std::make_shared<std::string>("noise");
  o.add("--height", cfg->height, "canvas height");
  o.add("--width", cfg->width, "canvas width");
  o.add("--channels", cfg->channels, "1 or 3");
  o.add("--frames", cfg->frames, "frame count");
  o.add("--shapes", cfg->shape_count, "number of shapes");
  o.add("--kinds", *kinds, "shape kinds: rect, disk, stick");
  o.add("--motion", *motion, "translation, sinusoidal or rotation");
  o.add("--max-speed", cfg->max_speed, "translation speed bound, px/frame");
  o.add("--min-size", cfg->min_size, "smallest shape size");
  o.add("--max-size", cfg->max_size, "largest shape size");
  o.add("--amplitude", cfg->amplitude, "sinusoidal amplitude");
  o.add("--period", cfg->period, "sinusoidal period, frames");
  o.add("--angular", cfg->angular, "rotation speed, rad/frame");
  o.add("--integer-motion", cfg->integer_motion, "round translation velocities");
  o.add("--texture", *texture, "shape texture: flat or noise");
  o.add("--bg-texture", *bg_texture, "background texture: flat or noise");
  o.add("--bg-v-row", cfg->bg_v_row, "background pan, rows/frame");
  o.add("--bg-v-col", cfg->bg_v_col, "background pan, cols/frame");
  o.add("--texture-cell", cfg->texture_cell, "noise cell size");
  o.add("--seed", cfg->seed, "random seed");
  c.run = [cfg, kinds, motion, texture, bg_texture](Context& ctx) {
    cfg->kinds.clear();
    for (const auto& k : *kinds) cfg->kinds.push_back(parse_shape_kind(k));
    cfg->motion = parse_motion_kind(*motion);
    cfg->texture = parse_texture_kind(*texture);
    cfg->bg_texture = parse_texture_kind(*bg_texture);
    const auto seq = render_scene(*cfg);
    for (std::size_t t = 0; t < seq.frames.size(); ++t) write_image(seq.frames[t], ctx.path(numbered("frames", t, ".png")));
    for (std::size_t t = 0; t < seq.flows.size(); ++t) write_flo(seq.flows[t], ctx.path(numbered("flow", t, ".flo")));
    if (seq.num_objects > 0)
      for (std::size_t t = 0; t < seq.labels.size(); ++t)
        write_mask(seq.labels[t], seq.num_objects, ctx.path(numbered("mask", t, ".png")));
    const bool any_joints = std::any_of(seq.joints.begin(), seq.joints.end(), [](const auto& j) { return !j.empty(); });
    if (any_joints) write_joints_csv(seq.joints, ctx.path("joints.csv"));
    ctx.notes = {{"convention", "pull"}, {"flow", "flow_t maps frame t+1 pixels to frame t"},
                 {"num_objects", std::to_string(seq.num_objects)}};
    ctx.out << "wrote " << seq.frames.size() << " frames to " << ctx.dir << "\n";
  };
}

void pair_outputs(Context& ctx, const MultigridResult& r) {
  write_flo(r.cropped_flow(), ctx.path("flow.flo"));
  write_flo(r.cropped_flow_ab(), ctx.path("flow_ab.flo"));
  write_image(r.recon, ctx.path("recon.png"));
  write_losses(r, ctx.path("losses.csv"));
  ctx.notes = {{"convention", "pull"}, {"flow", "target pixels sample the source"}};
  for (const auto& s : r.scales) {
    const std::string tag = "scale" + std::to_string(s.scale_index);
    write_flo(s.residual_ba, ctx.path("residual_" + tag + ".flo"));
    write_flo(s.flow_ba, ctx.path("flow_" + tag + ".flo"));
    write_image(s.recon, ctx.path("recon_" + tag + ".png"));
    ctx.notes.emplace_back(tag + "_size", std::to_string(s.field_ba.height()) + "x" + std::to_string(s.field_ba.width()));
  }
  const auto& fine = r.scales.back();
  ctx.out << "finest scale: rec " << fmt_value(fine.loss_ba.rec) << " total " << fmt_value(fine.loss_ba.total) << "\n";
}

void setup_solve(Command& c) {
  auto& o = *c.opts;
  struct State {
    std::string source, target;
    int levels = 3, k = 7;
    SolverOptions solver;
  };
  auto s = std::make_shared<State>();
  o.add("source,--source", s->source, "source image (sampled)");
  o.add("target,--target", s->target, "target image (reconstructed)");
  o.add("--levels", s->levels, "pyramid levels");
  o.add("--kernel", s->k, "filter size");
  o.add("--iterations", s->solver.iterations, "ADAM iterations per scale");
  o.add("--lr", s->solver.learning_rate, "ADAM learning rate");
  o.add("--budget", s->solver.budget, "coefficient budget per scale");
  add_weight_options(o, s->solver.weights);
  c.run = [s](Context& ctx) {
    require(s->source, "source");
    require(s->target, "target");
    const PyramidConfig cfg{s->levels, s->k};
    const auto r = solve_direct(read_image(s->source), read_image(s->target), cfg, s->solver);
    pair_outputs(ctx, r);
  };
}

void setup_infer(Command& c) {
  auto& o = *c.opts;
  struct State {
    std::string model, source, target;
    int levels = 3;
  };
  auto s = std::make_shared<State>();
  o.add("source,--source", s->source, "source image (sampled)");
  o.add("target,--target", s->target, "target image (reconstructed)");
  o.add("--model", s->model, "checkpoint");
  o.add("--levels", s->levels, "pyramid levels");
  c.run = [s](Context& ctx) {
    require(s->model, "--model");
    require(s->source, "source");
    require(s->target, "target");
    const auto model = load_checkpoint(s->model);
    const auto r = infer_network(model, read_image(s->source), read_image(s->target), {s->levels, model.config.k});
    pair_outputs(ctx, r);
  };
}

void setup_train(Command& c) {
  auto& o = *c.opts;
  struct State {
    std::string data, init;
    int synth_sequences = 0, synth_frames = 6, synth_size = 64;
    std::uint64_t synth_seed = 1;
    double synth_cell = 8.0;
    int levels = 3, k = 7;
    std::uint64_t net_seed = 0;
    TrainConfig train;
  };
  auto s = std::make_shared<State>();
  o.add("--data", s->data, "directory of frames, or of sequence subdirectories");
  o.add("--synth-sequences", s->synth_sequences, "generate this many synthetic sequences instead of --data");
  o.add("--synth-frames", s->synth_frames, "frames per synthetic sequence");
  o.add("--synth-size", s->synth_size, "synthetic canvas size");
  o.add("--synth-seed", s->synth_seed, "seed of the first synthetic sequence");
  o.add("--synth-cell", s->synth_cell, "synthetic texture cell");
  o.add("--init", s->init, "checkpoint to start from");
  o.add("--levels", s->levels, "pyramid levels");
  o.add("--kernel", s->k, "filter size");
  o.add("--net-seed", s->net_seed, "weight initialisation seed");
  o.add("--iterations", s->train.iterations, "training iterations");
  o.add("--lr", s->train.adam.learning_rate, "ADAM learning rate");
  o.add("--batch", s->train.batch_size, "pairs per step");
  o.add("--pair-window", s->train.pair_window, "pairs (i, j) with 0 < j - i < window");
  o.add("--flip", s->train.flip, "random flips");
  o.add("--rotate90", s->train.rotate90, "random quarter turns");
  o.add("--clip-norm", s->train.clip_norm, "gradient norm clip, 0 disables");
  o.add("--checkpoint-every", s->train.checkpoint_every, "checkpoint period, 0 disables");
  o.add("--seed", s->train.seed, "sampling seed");
  add_weight_options(o, s->train.weights);
  c.run = [s](Context& ctx) {
    Corpus corpus;
    if (!s->data.empty()) {
      std::vector<fs::path> subdirs;
      for (const auto& e : fs::directory_iterator(s->data))
        if (e.is_directory()) subdirs.push_back(e.path());
      std::sort(subdirs.begin(), subdirs.end());
      if (subdirs.empty()) {
        corpus.sequences.push_back(load_frames(s->data));
      } else {
        for (const auto& d : subdirs) corpus.sequences.push_back(load_frames(d.string()));
      }
    } else if (s->synth_sequences > 0) {
      for (int i = 0; i < s->synth_sequences; ++i) {
        auto cfg = training_scene_config(s->synth_seed + static_cast<std::uint64_t>(i), s->synth_size,
                                         s->synth_frames, s->synth_cell);
        corpus.sequences.push_back(render_scene(cfg).frames);
      }
    } else {
      throw UsageError("train needs --data or --synth-sequences");
    }
    corpus.validate();
    const int channels = corpus.sequences.front().front().channels();
    Model model;
    if (!s->init.empty()) {
      model = load_checkpoint(s->init);
    } else {
      model.config = NetConfig::for_kernel(s->k, channels);
      model.config.seed = s->net_seed;
      model.params = init_params(model.config);
    }
    TrainHooks hooks;
    auto& out = ctx.out;
    const int every = std::max(1, s->train.iterations / 20);
    hooks.progress = [&out, every](int it, double total) {
      if (it % every == 0) out << "iter " << it << " loss " << fmt_value(total) << "\n";
    };
    hooks.checkpoint = [&ctx, &model](int it, const PredictorParams& p) {
      save_checkpoint(Model{model.config, p}, ctx.path(numbered("ckpt", static_cast<std::size_t>(it), ".ckpt")));
    };
    const auto result = train(corpus, model, s->train, {s->levels, model.config.k}, hooks);
    save_checkpoint(Model{model.config, result.params}, ctx.path("model.ckpt"));
    write_train_log(result.log, ctx.path("train_log.csv"));
    out << "trained " << result.totals.size() << " iterations on " << corpus.sequences.size() << " sequences\n";
  };
}

void setup_track(Command& c) {
  auto& o = *c.opts;
  struct State {
    std::string frames, mask;
    int objects = 1;
    TrackerConfig tracker;
    FlowSource flow;
  };
  auto s = std::make_shared<State>();
  o.add("frames,--frames", s->frames, "frame directory");
  o.add("mask,--mask", s->mask, "first-frame label mask");
  o.add("--objects", s->objects, "number of objects in the mask");
  o.add("--k", s->tracker.window, "frames of history used per prediction");
  o.add("--threshold", s->tracker.threshold, "probability needed to keep a label");
  o.flag("--use-first-frame", s->tracker.use_first_frame, "always include the annotated frame");
  s->flow.add(o);
  c.run = [s](Context& ctx) {
    require(s->frames, "frames");
    require(s->mask, "mask");
    s->tracker.validate();
    const auto frames = load_frames(s->frames);
    const auto first = MaskStack::from_labels(read_mask(s->mask, s->objects), s->objects);
    const auto masks = track_masks(frames, first, s->flow.flow_fn(), s->tracker);
    for (std::size_t t = 0; t < masks.size(); ++t)
      write_mask(masks[t].labels(), s->objects, ctx.path(numbered("mask", t, ".png")));
    ctx.out << "tracked " << s->objects << " object(s) over " << masks.size() << " frames\n";
  };
}

void setup_pose(Command& c) {
  auto& o = *c.opts;
  struct State {
    std::string frames, joints;
    TrackerConfig tracker;
    FlowSource flow;
  };
  auto s = std::make_shared<State>();
  o.add("frames,--frames", s->frames, "frame directory");
  o.add("joints,--joints", s->joints, "joints CSV; frame 0 rows seed the tracker");
  o.add("--radius", s->tracker.joint_radius, "heatmap radius");
  s->flow.add(o);
  c.run = [s](Context& ctx) {
    require(s->frames, "frames");
    require(s->joints, "joints");
    s->tracker.validate();
    const auto frames = load_frames(s->frames);
    const auto seed = read_joints_csv(s->joints);
    if (seed.empty() || seed.front().empty()) throw ConfigError("'" + s->joints + "' has no frame-0 joints");
    const auto poses = track_pose(adjacent_flows(frames, s->flow.flow_fn()), seed.front(), s->tracker);
    write_joints_csv(poses, ctx.path("joints.csv"));
    ctx.out << "propagated " << seed.front().size() << " joint(s) over " << poses.size() << " frames\n";
  };
}

void setup_shots(Command& c) {
  auto& o = *c.opts;
  struct State {
    std::string frames;
    ShotConfig shots;
    FlowSource flow;
  };
  auto s = std::make_shared<State>();
  o.add("frames,--frames", s->frames, "frame directory");
  o.add("--trailing", s->shots.trailing, "trailing window of pair errors");
  o.add("--min-history", s->shots.min_history, "errors needed before detecting");
  o.add("--mad-factor", s->shots.mad_factor, "MADs above the median");
  o.add("--min-ratio", s->shots.min_ratio, "multiple of the median");
  s->flow.add(o);
  c.run = [s](Context& ctx) {
    require(s->frames, "frames");
    s->shots.validate();
    const auto frames = load_frames(s->frames);
    const auto errors = pair_errors(frames, s->flow.solve_fn());
    const auto cuts = detect_shots_from_errors(errors, s->shots);
    std::ofstream ef(ctx.path("errors.csv"));
    ef << "pair,error\n";
    for (std::size_t t = 0; t < errors.size(); ++t) ef << t << "," << fmt_value(errors[t]) << "\n";
    std::ofstream sf(ctx.path("shots.csv"));
    sf << "boundary\n";
    ctx.out << "boundaries:";
    for (int b : cuts) {
      sf << b << "\n";
      ctx.out << " " << b;
    }
    ctx.out << "\n";
    if (!ef || !sf) throw IoError("failed writing shot results");
  };
}

void setup_longflow(Command& c) {
  auto& o = *c.opts;
  struct State {
    std::string frames;
    int from = 0, to = -1;
    FlowSource flow;
  };
  auto s = std::make_shared<State>();
  o.add("frames,--frames", s->frames, "frame directory");
  o.add("--from", s->from, "source frame index");
  o.add("--to", s->to, "target frame index, -1 for the last");
  s->flow.add(o);
  c.run = [s](Context& ctx) {
    require(s->frames, "frames");
    const auto frames = load_frames(s->frames);
    const int to = s->to < 0 ? static_cast<int>(frames.size()) - 1 : s->to;
    const auto flow = long_range_flow(frames, s->from, to, s->flow.flow_fn());
    const auto& src = frames[static_cast<std::size_t>(s->from)];
    const auto& tgt = frames[static_cast<std::size_t>(to)];
    const auto recon = warp_with_flow(src, flow);
    const double l1 = recon_l1(recon, tgt);
    const double identity = recon_l1(src, tgt);
    write_flo(flow, ctx.path("flow.flo"));
    write_image(recon, ctx.path("recon.png"));
    std::ofstream m(ctx.path("metrics.csv"));
    m << "from,to,recon_l1,identity_l1\n" << s->from << "," << to << "," << fmt_value(l1) << "," << fmt_value(identity) << "\n";
    if (!m) throw IoError("failed writing metrics");
    ctx.out << "recon_l1 " << fmt_value(l1) << " identity_l1 " << fmt_value(identity) << "\n";
  };
}

std::map<std::string, std::string> files_by_name(const std::string& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out[e.path().filename().string()] = e.path().string();
  return out;
}

void setup_eval(Command& c) {
  auto& o = *c.opts;
  struct State {
    std::string pred, gt, kind = "flow";
    int objects = 1;
    double tau = 0.2, bbox = 0.0, tolerance = 2.0;
  };
  auto s = std::make_shared<State>();
  o.add("--pred", s->pred, "prediction directory (or joints CSV)");
  o.add("--gt", s->gt, "ground-truth directory (or joints CSV)");
  o.add("--kind", s->kind, "flow, mask or joints");
  o.add("--objects", s->objects, "objects per mask");
  o.add("--tau", s->tau, "PCK threshold as a fraction of the box size");
  o.add("--bbox", s->bbox, "PCK box size in px; 0 uses the ground-truth joint extent");
  o.add("--tolerance", s->tolerance, "boundary match radius in px");
  c.run = [s](Context& ctx) {
    require(s->pred, "--pred");
    require(s->gt, "--gt");
    std::ofstream m(ctx.path("metrics.csv"));
    double sum_a = 0.0, sum_b = 0.0;
    int n = 0;
    if (s->kind == "flow") {
      m << "file,epe\n";
      const auto pred = files_by_name(s->pred, ".flo");
      for (const auto& [name, gt_path] : files_by_name(s->gt, ".flo")) {
        auto it = pred.find(name);
        if (it == pred.end()) throw IoError("no prediction for " + name);
        const double epe = endpoint_error(read_flo(it->second), read_flo(gt_path));
        m << name << "," << fmt_value(epe) << "\n";
        sum_a += epe;
        ++n;
      }
      if (n == 0) throw IoError("no .flo files in '" + s->gt + "'");
      ctx.out << "mean_epe " << fmt_value(sum_a / n) << " over " << n << " flows\n";
    } else if (s->kind == "mask") {
      m << "file,jaccard,boundary_f\n";
      std::map<std::string, std::string> pred;
      for (const auto& f : list_images(s->pred)) pred[fs::path(f).filename().string()] = f;
      // Synthetic directories hold frames next to masks; score only the masks when present.
      auto gts = list_images(s->gt);
      const auto is_mask = [](const std::string& f) { return fs::path(f).filename().string().rfind("mask_", 0) == 0; };
      if (std::any_of(gts.begin(), gts.end(), is_mask)) std::erase_if(gts, [&](const auto& f) { return !is_mask(f); });
      for (const auto& gt_path : gts) {
        const auto name = fs::path(gt_path).filename().string();
        auto it = pred.find(name);
        if (it == pred.end()) throw IoError("no prediction for " + name);
        const auto p = read_mask(it->second, s->objects), g = read_mask(gt_path, s->objects);
        double j = 0.0, f = 0.0;
        for (int obj = 1; obj <= s->objects; ++obj) {
          j += eval_jaccard(object_mask(p, obj), object_mask(g, obj));
          f += eval_boundary_f(object_mask(p, obj), object_mask(g, obj), s->tolerance);
        }
        j /= s->objects;
        f /= s->objects;
        m << name << "," << fmt_value(j) << "," << fmt_value(f) << "\n";
        sum_a += j;
        sum_b += f;
        ++n;
      }
      if (n == 0) throw IoError("no masks in '" + s->gt + "'");
      ctx.out << "mean_jaccard " << fmt_value(sum_a / n) << " mean_boundary_f " << fmt_value(sum_b / n) << " over "
              << n << " frames\n";
    } else if (s->kind == "joints") {
      auto csv = [](const std::string& p) { return fs::is_directory(p) ? (fs::path(p) / "joints.csv").string() : p; };
      const auto pred = read_joints_csv(csv(s->pred));
      const auto gt = read_joints_csv(csv(s->gt));
      if (pred.size() != gt.size()) throw DimensionError("joint files cover different frame counts");
      m << "frame,pck\n";
      for (std::size_t t = 0; t < gt.size(); ++t) {
        double lo_r = 1e300, hi_r = -1e300, lo_c = 1e300, hi_c = -1e300;
        bool any = false;
        for (const auto& j : gt[t]) {
          if (!j.visible) continue;
          any = true;
          lo_r = std::min(lo_r, j.row), hi_r = std::max(hi_r, j.row);
          lo_c = std::min(lo_c, j.col), hi_c = std::max(hi_c, j.col);
        }
        if (!any) continue;
        const double box = s->bbox > 0.0 ? s->bbox : std::max({hi_r - lo_r, hi_c - lo_c, 1.0});
        const double pck = eval_pck(pred[t], gt[t], s->tau, box);
        m << t << "," << fmt_value(pck) << "\n";
        sum_a += pck;
        ++n;
      }
      if (n == 0) throw ConfigError("no visible ground-truth joints");
      ctx.out << "mean_pck " << fmt_value(sum_a / n) << " over " << n << " frames\n";
    } else {
      throw UsageError("--kind must be flow, mask or joints");
    }
    if (!m) throw IoError("failed writing metrics");
  };
}

void setup_gradcheck(Command& c) {
  auto& o = *c.opts;
  struct State {
    std::uint64_t seed = 1;
    int instances = 20, size = 8, k = 3, net_size = 16, net_kernel = 7, samples = 200;
    bool network = true;
  };
  auto s = std::make_shared<State>();
  o.add("--seed", s->seed, "random seed");
  o.add("--instances", s->instances, "random loss instances");
  o.add("--size", s->size, "instance size");
  o.add("--kernel", s->k, "instance filter size");
  o.add("--network", s->network, "also check the predictor backward pass");
  o.add("--net-size", s->net_size, "network input size");
  o.add("--net-kernel", s->net_kernel, "network filter size");
  o.add("--samples", s->samples, "weights sampled in the network check");
  c.run = [s](Context& ctx) {
    auto entries = loss_gradchecks(s->seed, s->instances, s->size, s->k);
    if (s->network) {
      entries.push_back(network_gradcheck(NetConfig::for_kernel(s->net_kernel), s->net_size, s->seed, s->samples));
    }
    std::ofstream m(ctx.path("gradcheck.csv"));
    m << "check,max_rel_error,tolerance,passed\n";
    bool ok = true;
    for (const auto& e : entries) {
      char line[160];
      std::snprintf(line, sizeof(line), "%-12s %.3e  (tol %.0e) %s\n", e.name.c_str(), e.max_rel_error, e.tolerance,
                    e.passed() ? "ok" : "FAIL");
      ctx.out << line;
      m << e.name << "," << fmt_value(e.max_rel_error) << "," << fmt_value(e.tolerance) << "," << e.passed() << "\n";
      ok = ok && e.passed();
    }
    if (!m) throw IoError("failed writing gradcheck.csv");
    if (!ok) throw NumericError("gradient check failed");
  };
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Coarse-to-fine filter flow toolkit", "mgpff");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  struct Spec {
    const char* name;
    const char* help;
    void (*setup)(Command&);
    bool needs_out;
  };
  const Spec specs[] = {
      {"synth", "generate a synthetic sequence with ground truth", setup_synth, true},
      {"solve", "direct-solver flow between two images", setup_solve, true},
      {"train", "train the filter predictor", setup_train, true},
      {"infer", "learned flow between two images", setup_infer, true},
      {"track", "propagate object masks through a frame directory", setup_track, true},
      {"pose", "propagate joints through a frame directory", setup_pose, true},
      {"shots", "detect shot boundaries", setup_shots, true},
      {"longflow", "flow and reconstruction from frame i to frame j", setup_longflow, true},
      {"eval", "metrics between prediction and ground truth", setup_eval, false},
      {"gradcheck", "finite-difference checks of every gradient", setup_gradcheck, false},
  };
  std::vector<Command> commands(std::size(specs));
  for (std::size_t i = 0; i < std::size(specs); ++i) {
    auto& c = commands[i];
    c.app = app.add_subcommand(specs[i].name, specs[i].help);
    c.opts = std::make_unique<OptionSet>(c.app);
    c.out_dir = specs[i].needs_out ? "" : ".";
    c.opts->add("-o,--output", c.out_dir, "output directory");
    specs[i].setup(c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  auto& cmd = *std::find_if(commands.begin(), commands.end(), [](const Command& c) { return c.app->parsed(); });
  try {
    if (!cmd.opts->config_path.empty()) cmd.opts->apply_config(read_manifest(cmd.opts->config_path).config);
    require(cmd.out_dir, "-o/--output");
    fs::create_directories(cmd.out_dir);
    Context ctx{out, cmd.out_dir, {}, {}};
    ctx.manifest.command = cmd.app->get_name();
    const auto t0 = std::chrono::steady_clock::now();
    cmd.run(ctx);
    ctx.manifest.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ctx.manifest.config = cmd.opts->resolved();
    ctx.manifest.notes = ctx.notes;
    ctx.manifest.compute_checksums(cmd.out_dir);
    write_manifest(ctx.manifest, (fs::path(cmd.out_dir) / "manifest.txt").string());
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << cmd.app->help();
    return 1;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mgpff
