#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "earlock/random.hpp"
#include "earlock/sift.hpp"

using namespace earlock;

namespace {

// dense random blob field; reliable producer of DoG keypoints
GrayImage make_texture(uint64_t seed, int w, int h) {
  Rng rng(seed);
  struct Blob {
    double cx, cy, width, amp;
  };
  std::vector<Blob> blobs;
  const int count = w * h / 180;
  for (int i = 0; i < count; ++i)
    blobs.push_back({rng.uniform(0.0, w - 1.0), rng.uniform(0.0, h - 1.0), rng.uniform(2.0, 6.0),
                     rng.uniform() < 0.5 ? -1.0 : 1.0});
  GrayImage img(w, h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (const auto& b : blobs) {
        const double dx = x - b.cx, dy = y - b.cy;
        const double d2 = dx * dx + dy * dy;
        if (d2 < 16.0 * b.width * b.width)
          v += b.amp * std::exp(-d2 / (2.0 * b.width * b.width));
      }
      img.at(x, y) = v;
    }
  double lo = 1e300, hi = -1e300;
  for (double v : img.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double& v : img.pixels) v = 0.1 + 0.8 * (v - lo) / (hi - lo);
  return img;
}

GrayImage gaussian_blob_image(int size, double cx, double cy, double sigma, double amplitude) {
  GrayImage img(size, size, 0.05);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dx = x - cx, dy = y - cy;
      img.at(x, y) += amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  return img;
}

struct Vec2 {
  double x, y;
};

Vec2 rotate_point(double x, double y, double cx, double cy, double theta) {
  const double dx = x - cx, dy = y - cy;
  return {cx + std::cos(theta) * dx - std::sin(theta) * dy,
          cy + std::sin(theta) * dx + std::cos(theta) * dy};
}

double descriptor_dist(const SiftFeature& a, const SiftFeature& b) {
  double acc = 0.0;
  for (int i = 0; i < 128; ++i) {
    const double d = double(a.descriptor[i]) - double(b.descriptor[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("scale space shape and octave count") {
  const GrayImage img(64, 64, 0.5);
  SiftConfig cfg;
  const ScaleSpace ss = build_scale_space(img, cfg);
  CHECK(ss.octaves.size() == 4);  // 64 -> 32 -> 16 -> 8 with minimum octave size 8
  for (size_t o = 0; o < ss.octaves.size(); ++o) {
    CHECK(ss.octaves[o].gauss.size() == size_t(cfg.scales_per_octave + 3));
    CHECK(ss.octaves[o].dog.size() == ss.octaves[o].gauss.size() - 1);
    const int expect = 64 >> o;
    CHECK(ss.octaves[o].gauss[0].width == expect);
    CHECK(ss.octaves[o].gauss[0].height == expect);
  }
  // constant input: every DoG layer is identically zero
  for (const auto& oct : ss.octaves)
    for (const auto& d : oct.dog)
      for (double v : d.pixels) CHECK(std::abs(v) < 1e-12);

  CHECK_THROWS(build_scale_space(GrayImage(16, 64, 0.5), cfg));  // too small
}

TEST_CASE("incremental blurs compose to the nominal sigma progression") {
  // blur an impulse through the chain and measure the kernel variance
  GrayImage delta(65, 65, 0.0);
  delta.at(32, 32) = 1.0;
  SiftConfig cfg;
  cfg.input_blur = 0.0;  // the impulse truly has no pre-blur
  const ScaleSpace ss = build_scale_space(delta, cfg);
  const double k = std::pow(2.0, 1.0 / cfg.scales_per_octave);
  for (int layer = 0; layer < cfg.scales_per_octave + 3; ++layer) {
    const GrayImage& g = ss.octaves[0].gauss[layer];
    double mass = 0.0, var = 0.0;
    for (int y = 0; y < 65; ++y)
      for (int x = 0; x < 65; ++x) {
        mass += g.at(x, y);
        var += g.at(x, y) * (x - 32.0) * (x - 32.0);
      }
    var /= mass;
    const double nominal = cfg.base_sigma * std::pow(k, layer);
    CHECK(std::sqrt(var) == doctest::Approx(nominal).epsilon(0.02));
    CHECK(ss.sigma_at(0, layer) == doctest::Approx(nominal).epsilon(1e-12));
  }
  CHECK(ss.sigma_at(1, 0) == doctest::Approx(2.0 * cfg.base_sigma).epsilon(1e-12));
}

TEST_CASE("extrema detection") {
  SiftConfig cfg;
  SUBCASE("constant image yields nothing") {
    const ScaleSpace ss = build_scale_space(GrayImage(64, 64, 0.3), cfg);
    CHECK(detect_extrema(ss, cfg).empty());
  }
  SUBCASE("a bright blob yields a candidate near its center") {
    const GrayImage img = gaussian_blob_image(64, 31.0, 33.0, 3.0, 0.8);
    const ScaleSpace ss = build_scale_space(img, cfg);
    const auto candidates = detect_extrema(ss, cfg);
    REQUIRE(!candidates.empty());
    bool near = false;
    for (const auto& c : candidates) {
      const double scale = std::pow(2.0, c.octave);
      if (std::hypot(c.x * scale - 31.0, c.y * scale - 33.0) <= 2.0) near = true;
    }
    CHECK(near);
  }
  SUBCASE("white noise produces candidates") {
    Rng rng(40);
    GrayImage img(64, 64);
    for (double& v : img.pixels) v = rng.uniform();
    const ScaleSpace ss = build_scale_space(img, cfg);
    CHECK(detect_extrema(ss, cfg).size() > 0);
  }
}

TEST_CASE("localization filters") {
  SiftConfig cfg;
  SUBCASE("step edge candidates are rejected by the curvature test") {
    // step in x with a gentle ramp along y so extrema are strict
    GrayImage img(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        img.at(x, y) = (x < 32 ? 0.2 : 0.8) + 0.002 * y;
    const ScaleSpace ss = build_scale_space(img, cfg);
    const auto candidates = detect_extrema(ss, cfg);
    const auto kept = localize_and_filter(candidates, ss, cfg);
    CHECK(kept.empty());
  }
  SUBCASE("an isolated blob survives with sub-pixel accuracy") {
    const double cx = 30.6, cy = 33.4;
    const GrayImage img = gaussian_blob_image(64, cx, cy, 2.5, 0.7);
    const ScaleSpace ss = build_scale_space(img, cfg);
    const auto kept = localize_and_filter(detect_extrema(ss, cfg), ss, cfg);
    REQUIRE(!kept.empty());
    double best = 1e300;
    for (const auto& kp : kept) {
      const double scale = std::pow(2.0, kp.octave);
      best = std::min(best, std::hypot(kp.x * scale - cx, kp.y * scale - cy));
    }
    CHECK(best <= 0.5);
  }
  SUBCASE("low-contrast structure is rejected") {
    const GrayImage img = gaussian_blob_image(64, 32.0, 32.0, 2.5, 0.01);
    const ScaleSpace ss = build_scale_space(img, cfg);
    CHECK(localize_and_filter(detect_extrema(ss, cfg), ss, cfg).empty());
  }
}

TEST_CASE("orientation assignment") {
  SiftConfig cfg;
  SUBCASE("linear ramp gives one orientation along the gradient") {
    const double phi = 0.6435;  // atan2(3, 4)
    GrayImage img(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) img.at(x, y) = (4.0 * x + 3.0 * y) / 700.0;
    const ScaleSpace ss = build_scale_space(img, cfg);
    Keypoint kp;
    kp.octave = 0;
    kp.layer = 1;
    kp.x = 32.0;
    kp.y = 32.0;
    kp.sigma = ss.sigma_at(0, 1);
    const auto oriented = assign_orientations(kp, ss, cfg);
    REQUIRE(oriented.size() == 1);
    const double diff =
        std::abs(std::remainder(oriented[0].orientation - phi, 2.0 * M_PI));
    CHECK(diff < 5.0 * M_PI / 180.0);
  }
  SUBCASE("two perpendicular gradient populations give two copies") {
    GrayImage img(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        img.at(x, y) = x < 32 ? x / 80.0 : y / 80.0 + 0.4;
    const ScaleSpace ss = build_scale_space(img, cfg);
    Keypoint kp;
    kp.octave = 0;
    kp.layer = 1;
    kp.x = 31.5;  // straddling the boundary weights both halves equally
    kp.y = 32.0;
    kp.sigma = ss.sigma_at(0, 1);
    const auto oriented = assign_orientations(kp, ss, cfg);
    REQUIRE(oriented.size() == 2);
    std::vector<double> angles;
    for (const auto& o : oriented) angles.push_back(o.orientation);
    std::sort(angles.begin(), angles.end());
    CHECK(std::abs(std::remainder(angles[0] - 0.0, 2.0 * M_PI)) < 8.0 * M_PI / 180.0);
    CHECK(std::abs(std::remainder(angles[1] - M_PI / 2.0, 2.0 * M_PI)) < 8.0 * M_PI / 180.0);
  }
  SUBCASE("flat window drops the keypoint") {
    const ScaleSpace ss = build_scale_space(GrayImage(64, 64, 0.5), cfg);
    Keypoint kp;
    kp.octave = 0;
    kp.layer = 1;
    kp.x = 32.0;
    kp.y = 32.0;
    kp.sigma = ss.sigma_at(0, 1);
    CHECK(assign_orientations(kp, ss, cfg).empty());
  }
}

TEST_CASE("descriptor invariants on a real extraction") {
  const GrayImage img = make_texture(7, 128, 128);
  SiftConfig cfg;
  const auto features = extract_sift(img, cfg);
  REQUIRE(features.size() >= 10);

  for (const auto& f : features) {
    CHECK(f.descriptor.size() == 128);
    double norm = 0.0, mx = 0.0;
    for (float d : f.descriptor) {
      CHECK(d >= 0.0f);
      norm += double(d) * d;
      mx = std::max(mx, double(d));
    }
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(mx <= cfg.descriptor_clamp + 1e-6);
    CHECK(f.x >= 0.0);
    CHECK(f.x <= img.width - 1.0);
    CHECK(f.y >= 0.0);
    CHECK(f.y <= img.height - 1.0);
    CHECK(f.orientation >= 0.0);
    CHECK(f.orientation < 2.0 * M_PI);
  }

  // canonical order is in effect
  for (size_t i = 1; i < features.size(); ++i) CHECK(!feature_less(features[i], features[i - 1]));

  // determinism: bit-identical rerun
  const auto again = extract_sift(img, cfg);
  REQUIRE(again.size() == features.size());
  for (size_t i = 0; i < features.size(); ++i) CHECK(again[i] == features[i]);
}

TEST_CASE("constant slice gives no features, small patch gives empty set") {
  SiftConfig cfg;
  CHECK(extract_sift(GrayImage(96, 96, 0.4), cfg).empty());
  CHECK(extract_sift(GrayImage(16, 16, 0.4), cfg).empty());  // below min_image_size
}

TEST_CASE("higher resolution yields more keypoints") {
  const GrayImage full = make_texture(12, 160, 160);
  const GrayImage half = scale_bilinear(full, 0.5);
  SiftConfig cfg;
  const auto n_full = extract_sift(full, cfg).size();
  const auto n_half = extract_sift(half, cfg).size();
  CHECK(n_full > n_half);
}

TEST_CASE("repeatability under rotation and scaling") {
  const int N = 192;
  const GrayImage img = make_texture(21, N, N);
  SiftConfig cfg;
  const auto base = extract_sift(img, cfg);
  REQUIRE(base.size() >= 30);
  const double margin = 24.0;

  SUBCASE("15 degree rotation, >= 80% reappear within 3 px and 1 layer") {
    const double theta = 15.0 * M_PI / 180.0;
    // rotate_bilinear maps dest <- R(-theta) so content turns by +theta
    const GrayImage turned = rotate_bilinear(img, -theta, 0.5);
    const auto found = extract_sift(turned, cfg);
    REQUIRE(!found.empty());
    int eligible = 0, hit = 0;
    const double c = (N - 1) / 2.0;
    for (const auto& f : base) {
      const Vec2 q = rotate_point(f.x, f.y, c, c, theta);
      if (q.x < margin || q.x > N - 1 - margin || q.y < margin || q.y > N - 1 - margin) continue;
      if (f.x < margin || f.x > N - 1 - margin || f.y < margin || f.y > N - 1 - margin) continue;
      ++eligible;
      for (const auto& g : found) {
        const double layer_gap =
            std::abs(std::log2(g.scale / f.scale)) * cfg.scales_per_octave;
        if (std::hypot(g.x - q.x, g.y - q.y) <= 3.0 && layer_gap <= 1.0) {
          ++hit;
          break;
        }
      }
    }
    REQUIRE(eligible >= 20);
    CHECK(double(hit) / eligible >= 0.80);
  }

  SUBCASE("1.25x scaling, >= 70% reappear") {
    const double s = 1.25;
    const GrayImage scaled = scale_bilinear(img, s);
    const auto found = extract_sift(scaled, cfg);
    REQUIRE(!found.empty());
    int eligible = 0, hit = 0;
    for (const auto& f : base) {
      if (f.x < margin || f.x > N - 1 - margin || f.y < margin || f.y > N - 1 - margin) continue;
      ++eligible;
      for (const auto& g : found) {
        const double layer_gap =
            std::abs(std::log2(g.scale / (f.scale * s))) * cfg.scales_per_octave;
        if (std::hypot(g.x - f.x * s, g.y - f.y * s) <= 3.0 && layer_gap <= 1.0) {
          ++hit;
          break;
        }
      }
    }
    REQUIRE(eligible >= 20);
    CHECK(double(hit) / eligible >= 0.70);
  }
}

TEST_CASE("descriptors survive a 90 degree rotation") {
  const int N = 129;  // odd size: rotation about the center is a pixel permutation
  const GrayImage img = make_texture(33, N, N);
  const GrayImage turned = rotate_bilinear(img, -M_PI / 2.0, 0.5);
  SiftConfig cfg;
  const auto base = extract_sift(img, cfg);
  const auto found = extract_sift(turned, cfg);
  REQUIRE(base.size() >= 20);
  REQUIRE(!found.empty());

  const double c = (N - 1) / 2.0;
  int paired = 0, close = 0;
  for (const auto& f : base) {
    const Vec2 q = rotate_point(f.x, f.y, c, c, M_PI / 2.0);
    const SiftFeature* best = nullptr;
    double best_d = 1e300;
    for (const auto& g : found) {
      if (std::hypot(g.x - q.x, g.y - q.y) > 2.0) continue;
      const double d = descriptor_dist(f, g);
      if (d < best_d) {
        best_d = d;
        best = &g;
      }
    }
    if (!best) continue;
    ++paired;
    if (best_d <= 0.35) ++close;
  }
  REQUIRE(paired >= 10);
  CHECK(double(close) / paired >= 0.8);
}

TEST_CASE("feature dump round trip at 6 significant digits") {
  const GrayImage img = make_texture(3, 96, 96);
  SiftConfig cfg;
  const auto features = extract_sift(img, cfg);
  REQUIRE(!features.empty());

  const std::string text = dump_features(features);
  const auto back = parse_features(text);
  REQUIRE(back.size() == features.size());
  for (size_t i = 0; i < features.size(); ++i) {
    CHECK(back[i].x == doctest::Approx(features[i].x).epsilon(1e-5));
    CHECK(back[i].scale == doctest::Approx(features[i].scale).epsilon(1e-5));
    for (int d = 0; d < 128; ++d)
      CHECK(std::abs(double(back[i].descriptor[d]) - double(features[i].descriptor[d])) <= 1e-5);
  }
  CHECK_THROWS(parse_features("1 2 3\n"));
}
