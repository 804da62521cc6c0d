#include "earlock/segmentation.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>
#include <tuple>

#include "earlock/divergence.hpp"

namespace earlock {

LabelMap assign_pixels(const Gmm& model, const ColorImage& img, const Mask& mask) {
  if (!img.valid()) throw std::runtime_error("assign_pixels: invalid image");
  if (img.width != mask.width || img.height != mask.height)
    throw std::runtime_error("assign_pixels: dimension mismatch");
  if (model.dim() != 3) throw std::runtime_error("assign_pixels: model must be 3-D color");

  const GmmEvaluator ev(model);
  const int k = ev.component_count();

  LabelMap out;
  out.width = img.width;
  out.height = img.height;
  out.labels.assign(img.pixels.size(), kOutsideMask);

  Eigen::VectorXd x(3);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    if (!mask.bits[i]) continue;
    const Rgb& p = img.pixels[i];
    x(0) = p.r;
    x(1) = p.g;
    x(2) = p.b;
    int best = 0;
    double best_score = ev.component_log_joint(0, x);
    for (int c = 1; c < k; ++c) {
      const double score = ev.component_log_joint(c, x);
      if (score > best_score) {  // strict: ties keep the lowest index
        best_score = score;
        best = c;
      }
    }
    out.labels[i] = best;
  }
  return out;
}

std::vector<SliceRegion> extract_slices(const LabelMap& labels, const ColorImage& img,
                                        int min_slice_pixels, GrayMode mode) {
  if (!img.valid()) throw std::runtime_error("extract_slices: invalid image");
  if (labels.width != img.width || labels.height != img.height)
    throw std::runtime_error("extract_slices: dimension mismatch");

  std::map<int, std::vector<std::pair<int, int>>> groups;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int label = labels.at(x, y);
      if (label == kOutsideMask) continue;
      groups[label].emplace_back(x, y);
    }

  std::vector<SliceRegion> slices;
  for (auto& [label, coords] : groups) {
    if (static_cast<int>(coords.size()) < min_slice_pixels) continue;

    SliceRegion s;
    s.component_index = label;
    s.pixel_coords = std::move(coords);
    s.x0 = s.y0 = std::numeric_limits<int>::max();
    s.x1 = s.y1 = std::numeric_limits<int>::min();
    for (const auto& [x, y] : s.pixel_coords) {
      s.x0 = std::min(s.x0, x);
      s.x1 = std::max(s.x1, x);
      s.y0 = std::min(s.y0, y);
      s.y1 = std::max(s.y1, y);
    }

    s.color_patch = ColorImage(s.patch_width(), s.patch_height());
    s.support = Mask(s.patch_width(), s.patch_height());
    for (const auto& [x, y] : s.pixel_coords) {
      s.color_patch.at(x - s.x0, y - s.y0) = img.at(x, y);
      s.support.set(x - s.x0, y - s.y0, true);
    }
    s.gray_patch = histogram_equalize(decolorize(s.color_patch, mode));
    slices.push_back(std::move(s));
  }

  if (slices.empty())
    throw std::runtime_error("extract_slices: every cluster is below the minimum slice size");
  return slices;  // map iteration already ordered by component index
}

SliceMatch correspond_slices(const std::vector<Gaussian>& ref,
                             const std::vector<Gaussian>& probe) {
  if (ref.empty() || probe.empty())
    throw std::runtime_error("correspond_slices: empty slice list");

  // all pairwise symmetric divergences
  struct Edge {
    double cost;
    int i, j;
  };
  std::vector<Edge> edges;
  edges.reserve(ref.size() * probe.size());
  for (size_t i = 0; i < ref.size(); ++i)
    for (size_t j = 0; j < probe.size(); ++j) {
      const double cost =
          0.5 * (gaussian_kl(ref[i], probe[j]) + gaussian_kl(probe[j], ref[i]));
      edges.push_back({cost, static_cast<int>(i), static_cast<int>(j)});
    }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.cost, a.i, a.j) < std::tie(b.cost, b.i, b.j);
  });

  SliceMatch out;
  std::vector<bool> used_ref(ref.size(), false), used_probe(probe.size(), false);
  for (const Edge& e : edges) {
    if (used_ref[e.i] || used_probe[e.j]) continue;
    used_ref[e.i] = true;
    used_probe[e.j] = true;
    out.pairs.emplace_back(e.i, e.j);
    out.total_cost += e.cost;
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (size_t i = 0; i < ref.size(); ++i)
    if (!used_ref[i]) out.unmatched_ref.push_back(static_cast<int>(i));
  for (size_t j = 0; j < probe.size(); ++j)
    if (!used_probe[j]) out.unmatched_probe.push_back(static_cast<int>(j));
  return out;
}

}  // namespace earlock
