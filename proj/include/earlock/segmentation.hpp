#pragma once

#include <utility>
#include <vector>

#include "earlock/gmm.hpp"
#include "earlock/image.hpp"

namespace earlock {

// Label value for pixels outside the crop mask.
constexpr int kOutsideMask = -1;

struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // row-major; component index or kOutsideMask

  int at(int x, int y) const { return labels[static_cast<size_t>(y) * width + x]; }
};

// One mixture component's pixels plus its cropped renderings. A slice is all
// pixels of one component even when spatially disconnected.
struct SliceRegion {
  int component_index = -1;
  std::vector<std::pair<int, int>> pixel_coords;  // (x, y), row-major order
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;             // inclusive bounding box
  ColorImage color_patch;  // out-of-region pixels zeroed
  GrayImage gray_patch;    // histogram_equalize(decolorize(color_patch))
  Mask support;            // in-region bitmap over the patch

  int patch_width() const { return x1 - x0 + 1; }
  int patch_height() const { return y1 - y0 + 1; }
};

// Labels every in-mask pixel with argmax_i w_i f(x|i); ties go to the lowest
// component index, out-of-mask pixels get kOutsideMask.
LabelMap assign_pixels(const Gmm& model, const ColorImage& img, const Mask& mask);

// Materializes one SliceRegion per label with at least min_slice_pixels
// pixels, ordered by component index. Throws when everything is undersized.
std::vector<SliceRegion> extract_slices(const LabelMap& labels, const ColorImage& img,
                                        int min_slice_pixels = 64,
                                        GrayMode mode = GrayMode::kLuminance);

struct SliceMatch {
  std::vector<std::pair<int, int>> pairs;  // (ref index, probe index)
  std::vector<int> unmatched_ref;
  std::vector<int> unmatched_probe;
  double total_cost = 0.0;
};

// Greedy minimum-cost pairing on symmetrized gaussian_kl between per-slice
// Gaussians; each slice is matched at most once.
SliceMatch correspond_slices(const std::vector<Gaussian>& ref, const std::vector<Gaussian>& probe);

}  // namespace earlock
