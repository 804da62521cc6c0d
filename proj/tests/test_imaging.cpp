#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "earlock/image.hpp"
#include "earlock/random.hpp"

using namespace earlock;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "earlock_imaging_tests";
  fs::create_directories(dir);
  return dir / name;
}

ColorImage solid(int w, int h, Rgb c) { return ColorImage(w, h, c); }

}  // namespace

TEST_CASE("ppm round trip and bit-exact layout") {
  ColorImage img(3, 2);
  for (int i = 0; i < 6; ++i) img.pixels[i] = {uint8_t(i * 40), uint8_t(255 - i), uint8_t(i)};
  const auto path = tmp_file("roundtrip.ppm");
  save_ppm(img, path.string());

  std::ifstream in(path, std::ios::binary);
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(contents.substr(0, 11) == "P6\n3 2\n255\n");
  CHECK(contents.size() == 11 + 3 * 2 * 3);

  const ColorImage back = load_ppm(path.string());
  REQUIRE(back.width == 3);
  REQUIRE(back.height == 2);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("png solid color decode") {
  const auto path = tmp_file("red.png");
  save_png(solid(2, 2, {255, 0, 0}), path.string());
  const ColorImage img = load_image(path.string());
  REQUIRE(img.width == 2);
  REQUIRE(img.height == 2);
  for (const Rgb& p : img.pixels) CHECK(p == Rgb{255, 0, 0});
}

TEST_CASE("200x240 image carries 48000 pixels") {
  const auto path = tmp_file("full.ppm");
  save_ppm(solid(200, 240, {10, 20, 30}), path.string());
  const ColorImage img = load_image(path.string());
  CHECK(img.pixels.size() == 48000);
}

TEST_CASE("malformed inputs are decode errors") {
  const auto missing = tmp_file("does_not_exist.png");
  CHECK_THROWS(load_image(missing.string()));

  const auto truncated = tmp_file("truncated.ppm");
  {
    std::ofstream out(truncated, std::ios::binary);
    out << "P6\n4 4\n255\nonly-a-few-bytes";
  }
  CHECK_THROWS(load_ppm(truncated.string()));

  const auto garbage = tmp_file("garbage.png");
  {
    std::ofstream out(garbage, std::ios::binary);
    out << "\x89PNG\r\n\x1a\nthis is not a real png";
  }
  CHECK_THROWS(load_png(garbage.string()));
}

TEST_CASE("apply_mask selects row-major masked pixels") {
  ColorImage img(2, 2);
  img.at(0, 0) = {1, 0, 0};
  img.at(1, 0) = {2, 0, 0};
  img.at(0, 1) = {3, 0, 0};
  img.at(1, 1) = {4, 0, 0};

  SUBCASE("identity mask") {
    const auto all = apply_mask(img, Mask::full(2, 2));
    REQUIRE(all.size() == 4);
    CHECK(all[0].r == 1);
    CHECK(all[3].r == 4);
  }
  SUBCASE("empty mask is an error") { CHECK_THROWS(apply_mask(img, Mask(2, 2, false))); }
  SUBCASE("checkerboard keeps row-major order") {
    Mask m(2, 2, false);
    m.set(0, 0, true);
    m.set(1, 1, true);
    const auto picked = apply_mask(img, m);
    REQUIRE(picked.size() == 2);
    CHECK(picked[0].r == 1);
    CHECK(picked[1].r == 4);
  }
  SUBCASE("dimension mismatch") { CHECK_THROWS(apply_mask(img, Mask::full(3, 2))); }
}

TEST_CASE("decolorize endpoints and luminance ordering") {
  const GrayImage white = decolorize(solid(2, 2, {255, 255, 255}));
  for (double v : white.pixels) CHECK(v == doctest::Approx(1.0));

  const GrayImage black = decolorize(solid(2, 2, {0, 0, 0}));
  for (double v : black.pixels) CHECK(v == doctest::Approx(0.0));

  const GrayImage red = decolorize(solid(1, 1, {255, 0, 0}));
  const GrayImage blue = decolorize(solid(1, 1, {0, 0, 255}));
  CHECK(red.pixels[0] == doctest::Approx(0.299));
  CHECK(blue.pixels[0] == doctest::Approx(0.114));
  CHECK(red.pixels[0] > blue.pixels[0]);
}

TEST_CASE("decolorize dominance property") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const Rgb b{uint8_t(rng.uniform_index(200)), uint8_t(rng.uniform_index(200)),
                uint8_t(rng.uniform_index(200))};
    const Rgb a{uint8_t(b.r + rng.uniform_index(56)), uint8_t(b.g + rng.uniform_index(56)),
                uint8_t(b.b + rng.uniform_index(56))};
    ColorImage img(2, 1);
    img.at(0, 0) = a;
    img.at(1, 0) = b;
    const GrayImage g = decolorize(img);
    CHECK(g.at(0, 0) >= g.at(1, 0));
  }
}

TEST_CASE("decolorize preserves dimensions and range in both modes") {
  Rng rng(7);
  ColorImage img(17, 9);
  for (auto& p : img.pixels)
    p = {uint8_t(rng.uniform_index(256)), uint8_t(rng.uniform_index(256)),
         uint8_t(rng.uniform_index(256))};
  for (GrayMode mode : {GrayMode::kLuminance, GrayMode::kContrast}) {
    const GrayImage g = decolorize(img, mode);
    CHECK(g.width == 17);
    CHECK(g.height == 9);
    for (double v : g.pixels) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    const GrayImage g2 = decolorize(img, mode);
    CHECK(g.pixels == g2.pixels);
  }
}

TEST_CASE("histogram equalization hand cases") {
  SUBCASE("constant image stays constant") {
    const GrayImage out = histogram_equalize(GrayImage(4, 4, 0.37));
    const double v = out.pixels[0];
    for (double p : out.pixels) CHECK(p == doctest::Approx(v));
  }
  SUBCASE("two-level image maps to CDF values") {
    GrayImage img(4, 2);
    for (int i = 0; i < 4; ++i) img.pixels[i] = 0.2;
    for (int i = 4; i < 8; ++i) img.pixels[i] = 0.8;
    const GrayImage out = histogram_equalize(img);
    for (int i = 0; i < 4; ++i) CHECK(out.pixels[i] == doctest::Approx(0.5));
    for (int i = 4; i < 8; ++i) CHECK(out.pixels[i] == doctest::Approx(1.0));
  }
  SUBCASE("uniform ramp is preserved within quantization") {
    GrayImage ramp(256, 1);
    for (int i = 0; i < 256; ++i) ramp.pixels[i] = i / 255.0;
    const GrayImage out = histogram_equalize(ramp);
    for (int i = 0; i < 256; ++i)
      CHECK(std::abs(out.pixels[i] - ramp.pixels[i]) <= 2.0 / 256.0);
  }
}

TEST_CASE("histogram equalization properties") {
  Rng rng(4321);
  for (int trial = 0; trial < 20; ++trial) {
    GrayImage img(31, 23);
    for (double& v : img.pixels) v = rng.uniform();
    const GrayImage once = histogram_equalize(img);
    CHECK(once.width == img.width);
    CHECK(once.height == img.height);

    // monotone non-decreasing remapping
    for (size_t i = 0; i < img.pixels.size(); ++i)
      for (size_t j = i % 37; j < img.pixels.size(); j += 37)
        if (img.pixels[i] <= img.pixels[j]) CHECK(once.pixels[i] <= once.pixels[j] + 1e-12);

    // idempotent up to one bin of quantization
    const GrayImage twice = histogram_equalize(once);
    for (size_t i = 0; i < once.pixels.size(); ++i)
      CHECK(std::abs(twice.pixels[i] - once.pixels[i]) <= 1.0 / 256.0 + 1e-12);

    // the top of the range is reached
    double mx = 0.0;
    for (double v : once.pixels) mx = std::max(mx, v);
    CHECK(mx == doctest::Approx(1.0));
  }
}

TEST_CASE("mask png round trip") {
  Mask m(5, 4);
  m.set(1, 1, true);
  m.set(4, 3, true);
  m.set(0, 0, true);
  const auto path = tmp_file("mask.png");
  save_mask_png(m, path.string());
  const Mask back = load_mask(path.string(), 5, 4);
  CHECK(back.bits == m.bits);
  CHECK(back.count() == 3);
  CHECK_THROWS(load_mask(path.string(), 4, 5));
}

TEST_CASE("rotate and scale behave at the identity and on dimensions") {
  GrayImage img(40, 30);
  Rng rng(5);
  for (double& v : img.pixels) v = rng.uniform();
  const GrayImage rot = rotate_bilinear(img, 0.3);
  CHECK(rot.width == 40);
  CHECK(rot.height == 30);
  const GrayImage zero = rotate_bilinear(img, 0.0);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(zero.pixels[i] == doctest::Approx(img.pixels[i]));
  const GrayImage half = scale_bilinear(img, 0.5);
  CHECK(half.width == 20);
  CHECK(half.height == 15);
}
