#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "earlock/image.hpp"

namespace earlock {

struct SiftConfig {
  int scales_per_octave = 3;
  double base_sigma = 1.6;
  double input_blur = 0.5;   // blur assumed already present in the input
  bool upsample = false;     // initial 2x upsampling stays off for small crops
  double contrast_threshold = 0.03;  // on [0,1] intensities
  double edge_ratio = 10.0;
  double descriptor_clamp = 0.2;
  int min_octave_size = 8;
  int min_image_size = 32;
  double boundary_overlap_limit = 0.5;  // max window fraction off-support
};

struct ScaleSpace {
  struct Octave {
    std::vector<GrayImage> gauss;  // scales_per_octave + 3 images
    std::vector<GrayImage> dog;    // adjacent differences, one fewer
  };
  std::vector<Octave> octaves;
  int scales_per_octave = 3;
  double base_sigma = 1.6;

  // absolute blur of gaussian layer `s` of octave `o`, in input-image units
  double sigma_at(int octave, double layer) const;
};

struct SiftFeature {
  double x = 0.0;  // full-image frame
  double y = 0.0;
  double scale = 0.0;        // absolute sigma
  double orientation = 0.0;  // radians in [0, 2pi)
  std::array<float, 128> descriptor{};

  bool operator==(const SiftFeature&) const = default;
};

// Total order used for dumps, de-duplication and zero-padding layouts.
bool feature_less(const SiftFeature& a, const SiftFeature& b);

struct ExtremumCandidate {
  int octave = 0;
  int layer = 0;  // DoG layer index
  int x = 0;      // octave coordinates
  int y = 0;
};

struct Keypoint {
  int octave = 0;
  int layer = 0;
  double x = 0.0, y = 0.0;     // sub-pixel, octave coordinates
  double layer_offset = 0.0;   // interpolated scale offset in layers
  double sigma = 0.0;          // absolute scale, input-image units
  double contrast = 0.0;
  double orientation = 0.0;    // set by assign_orientations
};

ScaleSpace build_scale_space(const GrayImage& img, const SiftConfig& config);

std::vector<ExtremumCandidate> detect_extrema(const ScaleSpace& ss, const SiftConfig& config);

std::vector<Keypoint> localize_and_filter(const std::vector<ExtremumCandidate>& candidates,
                                          const ScaleSpace& ss, const SiftConfig& config);

// One keypoint in, zero or more oriented copies out (peaks within 80% of the
// histogram maximum each produce one).
std::vector<Keypoint> assign_orientations(const Keypoint& kp, const ScaleSpace& ss,
                                          const SiftConfig& config);

// 4x4x8 descriptor over a rotated 16x16-sample window; nullopt when the
// window falls more than boundary_overlap_limit off the slice support or
// image. `support` may be null (whole image counts as support).
std::optional<SiftFeature> compute_descriptor(const Keypoint& kp, const ScaleSpace& ss,
                                              const SiftConfig& config,
                                              const Mask* support = nullptr);

// Full pipeline on one gray patch. Coordinates are shifted by (offset_x,
// offset_y) into the full-image frame; undersized patches yield an empty
// list. Output is sorted canonically and independent of thread count.
std::vector<SiftFeature> extract_sift(const GrayImage& patch, const SiftConfig& config,
                                      const Mask* support = nullptr, double offset_x = 0.0,
                                      double offset_y = 0.0);

// One feature per line: "x y scale orientation d0 ... d127", 6 significant
// digits, canonical order.
std::string dump_features(const std::vector<SiftFeature>& features);
std::vector<SiftFeature> parse_features(const std::string& text);

}  // namespace earlock
