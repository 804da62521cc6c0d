#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "earlock/divergence.hpp"
#include "earlock/random.hpp"
#include "earlock/segmentation.hpp"

using namespace earlock;

namespace {

Gaussian color_gaussian(double r, double g, double b, double var = 25.0) {
  Gaussian out;
  out.mean.resize(3);
  out.mean << r, g, b;
  out.covariance = Eigen::MatrixXd::Identity(3, 3) * var;
  return out;
}

Gmm two_component_model() {
  Gmm m;
  m.components = {{0.5, color_gaussian(200, 20, 20)}, {0.5, color_gaussian(20, 20, 200)}};
  return m;
}

}  // namespace

TEST_CASE("assign_pixels labels by maximum joint density") {
  const Gmm model = two_component_model();
  ColorImage img(3, 1);
  img.at(0, 0) = {200, 20, 20};   // component 0 mean
  img.at(1, 0) = {20, 20, 200};   // component 1 mean
  img.at(2, 0) = {110, 20, 110};  // exactly between symmetric components

  Mask mask = Mask::full(3, 1);
  const LabelMap labels = assign_pixels(model, img, mask);
  CHECK(labels.at(0, 0) == 0);
  CHECK(labels.at(1, 0) == 1);
  CHECK(labels.at(2, 0) == 0);  // tie resolves to the lowest index

  mask.set(1, 0, false);
  const LabelMap masked = assign_pixels(model, img, mask);
  CHECK(masked.at(1, 0) == kOutsideMask);
  CHECK(masked.at(0, 0) == 0);

  CHECK_THROWS(assign_pixels(model, img, Mask::full(2, 2)));
}

TEST_CASE("assign_pixels is invariant to weight rescaling") {
  Rng rng(3);
  ColorImage img(16, 16);
  for (auto& p : img.pixels)
    p = {uint8_t(rng.uniform_index(256)), uint8_t(rng.uniform_index(256)),
         uint8_t(rng.uniform_index(256))};
  const Mask mask = Mask::full(16, 16);

  Gmm model = two_component_model();
  model.components.push_back({0.25, color_gaussian(100, 220, 60)});
  const LabelMap base = assign_pixels(model, img, mask);

  Gmm scaled = model;
  for (auto& c : scaled.components) c.weight *= 3.7;  // argmax unchanged
  const LabelMap rescaled = assign_pixels(scaled, img, mask);
  CHECK(base.labels == rescaled.labels);
}

TEST_CASE("every in-mask pixel gets exactly one label and slices partition them") {
  Rng rng(11);
  const Gmm model = two_component_model();
  ColorImage img(24, 20);
  for (auto& p : img.pixels) {
    const bool red = rng.uniform() < 0.5;
    const auto noise = [&]() { return uint8_t(rng.uniform_index(30)); };
    p = red ? Rgb{uint8_t(180 + noise()), noise(), noise()}
            : Rgb{noise(), noise(), uint8_t(180 + noise())};
  }
  Mask mask(24, 20);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 24; ++x) mask.set(x, y, (x + y) % 5 != 0);

  const LabelMap labels = assign_pixels(model, img, mask);
  size_t labeled = 0;
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 24; ++x) {
      if (mask.at(x, y)) {
        CHECK(labels.at(x, y) >= 0);
        CHECK(labels.at(x, y) < model.size());
        ++labeled;
      } else {
        CHECK(labels.at(x, y) == kOutsideMask);
      }
    }

  const auto slices = extract_slices(labels, img, 1);
  std::set<std::pair<int, int>> seen;
  size_t total = 0;
  for (const auto& s : slices) {
    total += s.pixel_coords.size();
    for (const auto& c : s.pixel_coords) CHECK(seen.insert(c).second);  // pairwise disjoint
  }
  CHECK(total == labeled);
}

TEST_CASE("extract_slices drops undersized clusters and crops patches") {
  // hand-built label map: label 0 fills a 10x10 block, label 1 has 3 pixels
  LabelMap labels;
  labels.width = 16;
  labels.height = 12;
  labels.labels.assign(16 * 12, kOutsideMask);
  ColorImage img(16, 12, {50, 100, 150});
  for (int y = 1; y <= 10; ++y)
    for (int x = 2; x <= 11; ++x) labels.labels[y * 16 + x] = 0;
  labels.labels[0 * 16 + 14] = 1;
  labels.labels[1 * 16 + 14] = 1;
  labels.labels[2 * 16 + 14] = 1;

  SUBCASE("small cluster dropped under the default minimum") {
    const auto slices = extract_slices(labels, img, 64);
    REQUIRE(slices.size() == 1);
    CHECK(slices[0].component_index == 0);
    CHECK(slices[0].pixel_coords.size() == 100);
    CHECK(slices[0].x0 == 2);
    CHECK(slices[0].x1 == 11);
    CHECK(slices[0].y0 == 1);
    CHECK(slices[0].y1 == 10);
    CHECK(slices[0].color_patch.width == 10);
    CHECK(slices[0].color_patch.height == 10);

    // gray patch is the equalized decolorization of the color patch
    const GrayImage expected = histogram_equalize(decolorize(slices[0].color_patch));
    CHECK(slices[0].gray_patch.pixels == expected.pixels);
  }
  SUBCASE("all clusters retained with minimum 1, ordered by component") {
    const auto slices = extract_slices(labels, img, 1);
    REQUIRE(slices.size() == 2);
    CHECK(slices[0].component_index == 0);
    CHECK(slices[1].component_index == 1);
    CHECK(slices[1].pixel_coords.size() == 3);
  }
  SUBCASE("everything undersized is an error") {
    CHECK_THROWS(extract_slices(labels, img, 1000));
  }
  SUBCASE("out-of-region patch pixels are zeroed, support marks the region") {
    // make the block L-shaped so the bounding box has holes
    for (int y = 6; y <= 10; ++y)
      for (int x = 7; x <= 11; ++x) labels.labels[y * 16 + x] = kOutsideMask;
    const auto slices = extract_slices(labels, img, 1);
    const SliceRegion& s = slices[0];
    bool found_zeroed = false;
    for (int y = 0; y < s.color_patch.height; ++y)
      for (int x = 0; x < s.color_patch.width; ++x) {
        if (!s.support.at(x, y)) {
          CHECK(s.color_patch.at(x, y) == Rgb{0, 0, 0});
          found_zeroed = true;
        } else {
          CHECK(s.color_patch.at(x, y) == Rgb{50, 100, 150});
        }
      }
    CHECK(found_zeroed);
  }
}

TEST_CASE("correspond_slices greedy matching") {
  std::vector<Gaussian> ref = {color_gaussian(200, 20, 20), color_gaussian(20, 200, 20),
                               color_gaussian(20, 20, 200), color_gaussian(150, 150, 40)};

  SUBCASE("identical sets pair identically at zero cost") {
    const SliceMatch m = correspond_slices(ref, ref);
    REQUIRE(m.pairs.size() == 4);
    for (const auto& [i, j] : m.pairs) CHECK(i == j);
    CHECK(m.total_cost == doctest::Approx(0.0));
    CHECK(m.unmatched_ref.empty());
    CHECK(m.unmatched_probe.empty());
  }
  SUBCASE("permutation changes indices, not the matched sets or cost") {
    std::vector<Gaussian> probe = {ref[2], ref[0], ref[3], ref[1]};
    const SliceMatch m = correspond_slices(ref, probe);
    REQUIRE(m.pairs.size() == 4);
    // ref i must land on the permuted position of the same Gaussian
    const int expected_probe[4] = {1, 3, 0, 2};
    for (const auto& [i, j] : m.pairs) CHECK(j == expected_probe[i]);
    CHECK(m.total_cost == doctest::Approx(0.0));
  }
  SUBCASE("cardinality mismatch leaves the worst ref slice unmatched") {
    std::vector<Gaussian> probe = {ref[0], ref[1], ref[2]};
    const SliceMatch m = correspond_slices(ref, probe);
    CHECK(m.pairs.size() == 3);
    REQUIRE(m.unmatched_ref.size() == 1);
    CHECK(m.unmatched_ref[0] == 3);
    CHECK(m.unmatched_probe.empty());
  }
  SUBCASE("total cost is permutation invariant") {
    Rng rng(5);
    std::vector<Gaussian> probe;
    for (const auto& g : ref) {
      Gaussian p = g;
      for (int i = 0; i < 3; ++i) p.mean(i) += rng.uniform(-12.0, 12.0);
      probe.push_back(p);
    }
    const SliceMatch base = correspond_slices(ref, probe);
    std::vector<Gaussian> shuffled = {probe[3], probe[1], probe[0], probe[2]};
    const SliceMatch perm = correspond_slices(ref, shuffled);
    CHECK(base.total_cost == doctest::Approx(perm.total_cost).epsilon(1e-12));
  }
  SUBCASE("empty inputs are errors") {
    CHECK_THROWS(correspond_slices({}, ref));
    CHECK_THROWS(correspond_slices(ref, {}));
  }
}
