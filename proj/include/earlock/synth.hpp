#pragma once

#include <cstdint>
#include <string>

#include "earlock/image.hpp"

namespace earlock {

// Seeded "ear" generator: per-subject color palettes laid out as Voronoi
// cells (distinct mixture models) overlaid with per-subject procedural
// texture (distinct keypoint features); probe instances add rotation,
// translation and pixel-noise jitter.
struct SynthConfig {
  int subjects = 20;
  int probes_per_subject = 1;
  int width = 200;
  int height = 240;
  uint64_t seed = 7;
  int palette_size = 4;
  double palette_min_distance = 90.0;  // RGB separation between cells
  double texture_amplitude = 18.0;     // 8-bit units
  double noise_sigma = 2.5;
  double max_rotation_deg = 4.0;
  double max_shift_px = 3.0;
  std::string id_prefix = "s";
  int first_index = 1;
  std::string format = "png";  // "png" or "ppm"
};

// Instance 0 is the reference; higher instances are jittered probes.
ColorImage synth_ear_image(const SynthConfig& config, int subject_index, int instance);

Mask synth_ear_mask(const SynthConfig& config);

// Writes root/{id}/ref/ear.{fmt} (+ .mask.png) and
// root/{id}/probe/p{n}.{fmt} (+ .mask.png) for every subject.
void generate_dataset(const std::string& root, const SynthConfig& config);

}  // namespace earlock
