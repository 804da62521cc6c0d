#include "earlock/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "earlock/random.hpp"

namespace earlock {

namespace {

namespace fs = std::filesystem;

struct Sinusoid {
  double fx, fy, phase, amplitude;
};

struct Blob {
  double cx, cy, width, amplitude;
};

struct SubjectPattern {
  std::vector<std::array<double, 3>> palette;
  std::vector<std::pair<double, double>> sites;  // Voronoi sites
  std::vector<Sinusoid> waves;
  std::vector<Blob> blobs;
};

bool inside_ellipse(const SynthConfig& cfg, double x, double y) {
  const double cx = (cfg.width - 1) / 2.0;
  const double cy = (cfg.height - 1) / 2.0;
  const double ax = 0.45 * cfg.width;
  const double ay = 0.45 * cfg.height;
  const double nx = (x - cx) / ax;
  const double ny = (y - cy) / ay;
  return nx * nx + ny * ny <= 1.0;
}

int voronoi_cell(const SubjectPattern& p, double x, double y) {
  int best = 0;
  double best_d = 1e300;
  for (size_t i = 0; i < p.sites.size(); ++i) {
    const double dx = x - p.sites[i].first;
    const double dy = y - p.sites[i].second;
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double texture_at(const SubjectPattern& p, double x, double y) {
  double t = 0.0;
  for (const auto& w : p.waves)
    t += w.amplitude * std::sin(2.0 * M_PI * (w.fx * x + w.fy * y) + w.phase);
  for (const auto& b : p.blobs) {
    const double dx = x - b.cx;
    const double dy = y - b.cy;
    const double d2 = dx * dx + dy * dy;
    if (d2 > 16.0 * b.width * b.width) continue;  // below 3e-4 of the peak
    t += b.amplitude * std::exp(-d2 / (2.0 * b.width * b.width));
  }
  return t;
}

SubjectPattern make_pattern(const SynthConfig& cfg, int subject_index) {
  Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(subject_index)));
  SubjectPattern p;

  // palette: well-separated colors so the mixture components stay distinct
  for (int attempt = 0; attempt < 2000; ++attempt) {
    p.palette.clear();
    for (int i = 0; i < cfg.palette_size; ++i)
      p.palette.push_back({rng.uniform(40.0, 215.0), rng.uniform(40.0, 215.0),
                           rng.uniform(40.0, 215.0)});
    double min_d = 1e300;
    for (size_t a = 0; a < p.palette.size(); ++a)
      for (size_t b = a + 1; b < p.palette.size(); ++b) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double diff = p.palette[a][c] - p.palette[b][c];
          d += diff * diff;
        }
        min_d = std::min(min_d, std::sqrt(d));
      }
    if (min_d >= cfg.palette_min_distance) break;
    if (attempt == 1999) throw std::runtime_error("synth: could not place a palette");
  }

  // Voronoi sites with each cell large enough to host keypoints
  const int min_cell_pixels = 2500;
  const int min_cell_extent = 48;
  for (int attempt = 0; attempt < 500; ++attempt) {
    p.sites.clear();
    for (int i = 0; i < cfg.palette_size; ++i)
      p.sites.emplace_back(rng.uniform(0.18 * cfg.width, 0.82 * cfg.width),
                           rng.uniform(0.18 * cfg.height, 0.82 * cfg.height));
    std::vector<int> counts(cfg.palette_size, 0);
    std::vector<int> x0(cfg.palette_size, cfg.width), x1(cfg.palette_size, -1);
    std::vector<int> y0(cfg.palette_size, cfg.height), y1(cfg.palette_size, -1);
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) {
        if (!inside_ellipse(cfg, x, y)) continue;
        const int c = voronoi_cell(p, x, y);
        ++counts[c];
        x0[c] = std::min(x0[c], x);
        x1[c] = std::max(x1[c], x);
        y0[c] = std::min(y0[c], y);
        y1[c] = std::max(y1[c], y);
      }
    bool ok = true;
    for (int c = 0; c < cfg.palette_size; ++c)
      if (counts[c] < min_cell_pixels || x1[c] - x0[c] + 1 < min_cell_extent ||
          y1[c] - y0[c] + 1 < min_cell_extent)
        ok = false;
    if (ok) break;
    if (attempt == 499) throw std::runtime_error("synth: could not place Voronoi cells");
  }

  // a few gentle waves for shading, plus a dense dot field: isolated blobs
  // survive SIFT's edge filter where pure gratings do not
  for (int i = 0; i < 4; ++i) {
    const double angle = rng.uniform(0.0, M_PI);
    const double wavelength = rng.uniform(12.0, 30.0);
    p.waves.push_back({std::cos(angle) / wavelength, std::sin(angle) / wavelength,
                       rng.uniform(0.0, 2.0 * M_PI),
                       cfg.texture_amplitude / 8.0 * rng.uniform(0.7, 1.3)});
  }
  const int blob_count = cfg.width * cfg.height / 400;
  for (int i = 0; i < blob_count; ++i) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    p.blobs.push_back({rng.uniform(0.0, cfg.width - 1.0), rng.uniform(0.0, cfg.height - 1.0),
                       rng.uniform(2.5, 7.0),
                       sign * cfg.texture_amplitude * rng.uniform(0.4, 0.9)});
  }
  return p;
}

uint8_t clamp_channel(double v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace

Mask synth_ear_mask(const SynthConfig& cfg) {
  Mask m(cfg.width, cfg.height);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) m.set(x, y, inside_ellipse(cfg, x, y));
  return m;
}

ColorImage synth_ear_image(const SynthConfig& cfg, int subject_index, int instance) {
  const SubjectPattern pattern = make_pattern(cfg, subject_index);
  Rng jitter_rng(mix_seed(cfg.seed, 100003ULL * (subject_index + 1) + instance));

  double theta = 0.0, shift_x = 0.0, shift_y = 0.0;
  if (instance > 0) {
    theta = jitter_rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) * M_PI / 180.0;
    shift_x = jitter_rng.uniform(-cfg.max_shift_px, cfg.max_shift_px);
    shift_y = jitter_rng.uniform(-cfg.max_shift_px, cfg.max_shift_px);
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double cx = (cfg.width - 1) / 2.0;
  const double cy = (cfg.height - 1) / 2.0;

  ColorImage img(cfg.width, cfg.height);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      if (!inside_ellipse(cfg, x, y)) continue;
      // sample the continuous pattern at the inverse-jittered location
      const double dx = x - cx - shift_x;
      const double dy = y - cy - shift_y;
      const double u = cx + c * dx + s * dy;
      const double v = cy - s * dx + c * dy;
      const int cell = voronoi_cell(pattern, u, v);
      const double t = texture_at(pattern, u, v);
      Rgb& px = img.at(x, y);
      px.r = clamp_channel(pattern.palette[cell][0] + t + jitter_rng.normal(0.0, cfg.noise_sigma));
      px.g = clamp_channel(pattern.palette[cell][1] + t + jitter_rng.normal(0.0, cfg.noise_sigma));
      px.b = clamp_channel(pattern.palette[cell][2] + t + jitter_rng.normal(0.0, cfg.noise_sigma));
    }
  }
  return img;
}

void generate_dataset(const std::string& root, const SynthConfig& cfg) {
  if (cfg.subjects < 1) throw std::runtime_error("synth: need at least one subject");
  if (cfg.format != "png" && cfg.format != "ppm")
    throw std::runtime_error("synth: format must be png or ppm");

  const Mask mask = synth_ear_mask(cfg);
  for (int i = 0; i < cfg.subjects; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "%s%03d", cfg.id_prefix.c_str(), cfg.first_index + i);
    const fs::path subject_dir = fs::path(root) / id;
    fs::create_directories(subject_dir / "ref");
    fs::create_directories(subject_dir / "probe");

    auto write_instance = [&](const fs::path& stem, int instance) {
      const ColorImage img = synth_ear_image(cfg, i, instance);
      const std::string img_path = stem.string() + "." + cfg.format;
      if (cfg.format == "png")
        save_png(img, img_path);
      else
        save_ppm(img, img_path);
      save_mask_png(mask, stem.string() + ".mask.png");
    };

    write_instance(subject_dir / "ref" / "ear", 0);
    for (int pr = 0; pr < cfg.probes_per_subject; ++pr) {
      char name[16];
      std::snprintf(name, sizeof(name), "p%02d", pr + 1);
      write_instance(subject_dir / "probe" / name, pr + 1);
    }
  }
}

}  // namespace earlock
