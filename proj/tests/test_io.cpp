#include <png.h>

#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "mgpff/errors.hpp"
#include "mgpff/io.hpp"
#include "mgpff/synth.hpp"
#include "test_util.hpp"

using mgpff::testing::TempDir;
using mgpff::testing::slurp;
using mgpff::testing::spit;

using namespace mgpff;

namespace {

Image random_image(int h, int w, int c, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w, c);
  for (auto& v : img.storage()) v = u(rng);
  return img;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("8-bit images round trip within half a quantization step") {
  TempDir dir("img");
  struct Case {
    const char* name;
    int channels;
  };
  for (Case c : {Case{"a.png", 1}, Case{"b.png", 3}, Case{"c.pgm", 1}, Case{"d.ppm", 3}}) {
    CAPTURE(c.name);
    const auto img = random_image(7, 9, c.channels, 3);
    write_image(img, dir.file(c.name));
    const auto back = read_image(dir.file(c.name));
    REQUIRE(back.same_shape(img));
    CHECK(max_abs_diff(img, back) <= 1.0 / 510.0 + 1e-12);
    // Quantized values survive a second trip unchanged.
    write_image(back, dir.file(std::string("again_") + c.name));
    CHECK(read_image(dir.file(std::string("again_") + c.name)) == back);
  }
}

TEST_CASE("binary PGM with comment parses") {
  TempDir dir("pgm");
  spit(dir.file("x.pgm"), std::string("P5\n# made by hand\n2 2\n255\n") + std::string("\x00\x40\x80\xff", 4));
  const auto img = read_image(dir.file("x.pgm"));
  REQUIRE(img.height() == 2);
  REQUIRE(img.width() == 2);
  CHECK(img.at(0, 0) == 0.0);
  CHECK(img.at(0, 1) == doctest::Approx(64.0 / 255.0));
  CHECK(img.at(1, 1) == 1.0);
  spit(dir.file("short.pgm"), std::string("P5 2 2 255\n") + std::string("\x00\x40", 2));
  CHECK_THROWS_AS(read_image(dir.file("short.pgm")), FormatError);
}

TEST_CASE("unsupported inputs raise format errors") {
  TempDir dir("bad");
  spit(dir.file("x.png"), "XXXXXXXXXXXXXXXX");
  CHECK_THROWS_AS(read_image(dir.file("x.png")), FormatError);
  CHECK_THROWS_AS(read_image(dir.file("missing.png")), IoError);

  // 16-bit grayscale PNG written through libpng directly.
  png_image info;
  std::memset(&info, 0, sizeof info);
  info.version = PNG_IMAGE_VERSION;
  info.width = 2;
  info.height = 2;
  info.format = PNG_FORMAT_LINEAR_Y;
  const png_uint_16 px[4] = {0, 1000, 30000, 65535};
  REQUIRE(png_image_write_to_file(&info, dir.file("deep.png").c_str(), 0, px, 0, nullptr));
  CHECK_THROWS_WITH_AS(read_image(dir.file("deep.png")), doctest::Contains("16"), FormatError);
}

TEST_CASE("flo stores u then v") {
  TempDir dir("flo");
  const CoordinateFlow f(1, 1, 1.0, 2.0);
  write_flo(f, dir.file("one.flo"));
  const auto bytes = slurp(dir.file("one.flo"));
  REQUIRE(bytes.size() == 20);
  CHECK(bytes.substr(0, 4) == "PIEH");
  float uv[2];
  std::memcpy(uv, bytes.data() + 12, 8);
  CHECK(uv[0] == 2.0f);
  CHECK(uv[1] == 1.0f);
  const auto back = read_flo(dir.file("one.flo"));
  CHECK(back.d_row(0, 0) == 1.0);
  CHECK(back.d_col(0, 0) == 2.0);
}

TEST_CASE("flo round trip is bitwise") {
  TempDir dir("flo2");
  CoordinateFlow f(5, 6);
  std::mt19937 rng(9);
  std::normal_distribution<float> n(0.0f, 3.0f);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) {
      f.d_row(r, c) = n(rng);
      f.d_col(r, c) = n(rng);
    }
  write_flo(f, dir.file("a.flo"));
  const auto back = read_flo(dir.file("a.flo"));
  CHECK(back == f);
  write_flo(back, dir.file("b.flo"));
  CHECK(slurp(dir.file("a.flo")) == slurp(dir.file("b.flo")));
  spit(dir.file("bad.flo"), slurp(dir.file("a.flo")).substr(0, 30));
  CHECK_THROWS_AS(read_flo(dir.file("bad.flo")), FormatError);
}

TEST_CASE("filter field round trip") {
  TempDir dir("field");
  FilterFlowField f = FilterFlowField::delta(3, 4, 5, 1, -2, 7.5);
  f.set_scale_index(2);
  f.logit(3, 4) = -0.125;
  write_field(f, dir.file("f.mgpf"));
  CHECK(read_field(dir.file("f.mgpf")) == f);
}

TEST_CASE("checkpoint round trip is bitwise") {
  TempDir dir("ckpt");
  Model m{NetConfig::for_kernel(5), {}};
  m.config.seed = 42;
  m.config.out_gain = 0.37;
  m.params = init_params(m.config);
  m.params.tensors[3].data[2] = -1.0e-30f;
  save_checkpoint(m, dir.file("a.ckpt"));
  const auto back = load_checkpoint(dir.file("a.ckpt"));
  CHECK(back.params == m.params);
  CHECK(back.config.k == 5);
  CHECK(back.config.seed == 42);
  CHECK(back.config.out_gain == 0.37);
  CHECK(back.config.embed_channels == m.config.embed_channels);
  save_checkpoint(back, dir.file("b.ckpt"));
  CHECK(slurp(dir.file("a.ckpt")) == slurp(dir.file("b.ckpt")));

  auto bytes = slurp(dir.file("a.ckpt"));
  bytes[0] = 'X';
  spit(dir.file("c.ckpt"), bytes);
  CHECK_THROWS_AS(load_checkpoint(dir.file("c.ckpt")), FormatError);
  spit(dir.file("d.ckpt"), slurp(dir.file("a.ckpt")).substr(0, 200));
  CHECK_THROWS_AS(load_checkpoint(dir.file("d.ckpt")), FormatError);
}

TEST_CASE("masks and joints round trip") {
  TempDir dir("mask");
  Image labels(4, 5, 1);
  labels.at(1, 1) = 1;
  labels.at(2, 3) = 2;
  labels.at(3, 4) = 3;
  write_mask(labels, 3, dir.file("m.png"));
  const auto img = read_image(dir.file("m.png"));
  CHECK(img.at(1, 1) == doctest::Approx(85.0 / 255.0));
  CHECK(img.at(3, 4) == 1.0);
  CHECK(read_mask(dir.file("m.png"), 3) == labels);

  const std::vector<std::vector<Joint>> joints{{{1.5, 2.25, true}, {0.1, 1.0 / 3.0, false}},
                                               {{4.0, 5.0, true}, {6.0, 7.0, true}}};
  write_joints_csv(joints, dir.file("j.csv"));
  CHECK(read_joints_csv(dir.file("j.csv")) == joints);
}

TEST_CASE("manifest round trip") {
  TempDir dir("manifest");
  spit(dir.file("out.txt"), "abc");
  RunManifest m;
  m.command = "solve";
  m.config = {{"levels", "3"}, {"note", "two words"}};
  m.outputs = {"out.txt"};
  m.duration_s = 1.5;
  m.notes = {{"convention", "pull"}};
  m.compute_checksums(dir.path().string());
  CHECK(m.checksums.at("out.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  write_manifest(m, dir.file("manifest.txt"));
  const auto back = read_manifest(dir.file("manifest.txt"));
  CHECK(back.command == m.command);
  CHECK(back.config == m.config);
  CHECK(back.outputs == m.outputs);
  CHECK(back.duration_s == m.duration_s);
  CHECK(back.checksums == m.checksums);
  CHECK(back.notes == m.notes);
}

TEST_CASE("image listing is sorted and filtered") {
  TempDir dir("list");
  const Image img(2, 2, 1, 0.5);
  write_image(img, dir.file("b.png"));
  write_image(img, dir.file("a.pgm"));
  spit(dir.file("c.txt"), "x");
  const auto files = list_images(dir.path().string());
  REQUIRE(files.size() == 2);
  CHECK(files[0].find("a.pgm") != std::string::npos);
  CHECK(files[1].find("b.png") != std::string::npos);
}
