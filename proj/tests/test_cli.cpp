#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mgpff/cli.hpp"
#include "mgpff/io.hpp"
#include "test_util.hpp"

using namespace mgpff;
using mgpff::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mgpff");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string config_value(const RunManifest& m, const std::string& key) {
  for (const auto& [k, v] : m.config)
    if (k == key) return v;
  return "<missing>";
}

}  // namespace

TEST_CASE("exit codes") {
  TempDir dir("cli_codes");
  CHECK(run({}).code == 1);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({"solve", "--help"}).code == 0);
  CHECK(run({"solve", "--no-such-flag", "-o", dir.file("x")}).code == 1);
  // Missing required positionals is a validation error.
  CHECK(run({"solve", "-o", dir.file("x")}).code == 1);
  // Missing input files are I/O errors.
  CHECK(run({"solve", dir.file("nope.png"), dir.file("nope2.png"), "-o", dir.file("x")}).code == 2);
  CHECK(run({"synth", "-o", dir.file("s"), "--frames", "1"}).code == 1);
}

TEST_CASE("synth writes frames, ground truth and a manifest") {
  TempDir dir("cli_synth");
  const auto r = run({"synth", "-o", dir.file("s"), "--frames", "3", "--height", "16", "--width", "16",
                      "--min-size", "3", "--max-size", "5", "--seed", "2"});
  REQUIRE(r.code == 0);
  for (const char* f : {"frames_0000.png", "frames_0002.png", "flow_0001.flo", "mask_0002.png", "manifest.txt"})
    CHECK(std::filesystem::exists(dir.file(std::string("s/") + f)));
  const auto m = read_manifest(dir.file("s/manifest.txt"));
  CHECK(m.command == "synth");
  CHECK(m.checksums.size() == m.outputs.size());
  CHECK(config_value(m, "seed") == "2");
  const auto img = read_image(dir.file("s/frames_0000.png"));
  CHECK(img.height() == 16);
}

TEST_CASE("manifest re-run reproduces checksums") {
  TempDir dir("cli_rerun");
  REQUIRE(run({"synth", "-o", dir.file("s"), "--frames", "2", "--height", "16", "--width", "16",
               "--min-size", "3", "--max-size", "5", "--seed", "1", "--max-speed", "2"})
              .code == 0);
  const std::vector<std::string> solve{"solve", dir.file("s/frames_0000.png"), dir.file("s/frames_0001.png"),
                                       "--levels", "2", "--kernel", "3", "--iterations", "15"};
  auto first = solve;
  first.insert(first.end(), {"-o", dir.file("a")});
  REQUIRE(run(first).code == 0);
  const auto ma = read_manifest(dir.file("a/manifest.txt"));
  CHECK(ma.checksums.count("flow.flo") == 1);
  CHECK(ma.checksums.count("recon.png") == 1);

  // The manifest doubles as a config file; the output directory is overridden.
  REQUIRE(run({"solve", "--config", dir.file("a/manifest.txt"), "-o", dir.file("b")}).code == 0);
  const auto mb = read_manifest(dir.file("b/manifest.txt"));
  CHECK(mb.checksums == ma.checksums);
}

TEST_CASE("command line flags override config values") {
  TempDir dir("cli_config");
  testing::spit(dir.file("cfg.txt"), "# comment\nframes = 4\nheight = 16\nwidth = 16\nmin-size = 3\nmax-size = 5\n");
  REQUIRE(run({"synth", "--config", dir.file("cfg.txt"), "--frames", "2", "-o", dir.file("s")}).code == 0);
  const auto m = read_manifest(dir.file("s/manifest.txt"));
  CHECK(config_value(m, "frames") == "2");
  CHECK(config_value(m, "height") == "16");
  CHECK_FALSE(std::filesystem::exists(dir.file("s/frames_0002.png")));

  testing::spit(dir.file("bad.txt"), "colour = red\n");
  CHECK(run({"synth", "--config", dir.file("bad.txt"), "-o", dir.file("t")}).code == 1);
  CHECK(run({"synth", "--config", dir.file("missing.txt"), "-o", dir.file("t")}).code == 2);
}

TEST_CASE("eval reports flow error against ground truth") {
  TempDir dir("cli_eval");
  REQUIRE(run({"synth", "-o", dir.file("s"), "--frames", "2", "--height", "16", "--width", "16",
               "--min-size", "3", "--max-size", "5"})
              .code == 0);
  const auto r = run({"eval", "--kind", "flow", "--pred", dir.file("s"), "--gt", dir.file("s"), "-o", dir.file("e")});
  CHECK(r.code == 0);
  CHECK(r.out.find("mean_epe 0 ") != std::string::npos);
  CHECK(testing::slurp(dir.file("e/metrics.csv")).find("flow_0000.flo,0\n") != std::string::npos);
}

TEST_CASE("mask eval skips frames stored next to synthetic masks") {
  TempDir dir("cli_eval_mask");
  REQUIRE(run({"synth", "-o", dir.file("s"), "--frames", "2", "--height", "16", "--width", "16",
               "--min-size", "3", "--max-size", "5"})
              .code == 0);
  const auto r = run({"eval", "--kind", "mask", "--pred", dir.file("s"), "--gt", dir.file("s"), "-o", dir.file("e")});
  CHECK(r.code == 0);
  CHECK(r.out.find("mean_jaccard 1 mean_boundary_f 1 over 2 frames") != std::string::npos);
  CHECK(testing::slurp(dir.file("e/metrics.csv")).find("frames_") == std::string::npos);
}
