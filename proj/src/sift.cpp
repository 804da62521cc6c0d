#include "earlock/sift.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace earlock {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (sigma <= 1e-9) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int w = img.width, h = img.height;
  GrayImage tmp(w, h), out(w, h);
  // horizontal, edges replicated
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * img.at(std::clamp(x + i, 0, w - 1), y);
      tmp.at(x, y) = acc;
    }
  // vertical
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1));
      out.at(x, y) = acc;
    }
  return out;
}

GrayImage downsample_half(const GrayImage& img) {
  GrayImage out(img.width / 2, img.height / 2);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(2 * x, 2 * y);
  return out;
}

inline double dog_at(const ScaleSpace::Octave& oct, int l, int x, int y) {
  return oct.dog[l].at(x, y);
}

// gradient with edge clamp, 0.5*central difference
inline void gradient_at(const GrayImage& g, int x, int y, double& dx, double& dy) {
  const int xm = std::clamp(x - 1, 0, g.width - 1);
  const int xp = std::clamp(x + 1, 0, g.width - 1);
  const int ym = std::clamp(y - 1, 0, g.height - 1);
  const int yp = std::clamp(y + 1, 0, g.height - 1);
  dx = 0.5 * (g.at(xp, y) - g.at(xm, y));
  dy = 0.5 * (g.at(x, yp) - g.at(x, ym));
}

int orientation_gauss_layer(const Keypoint& kp, const ScaleSpace& ss) {
  const int max_layer = ss.scales_per_octave + 2;
  const int l = static_cast<int>(std::lround(kp.layer + kp.layer_offset));
  return std::clamp(l, 0, max_layer);
}

}  // namespace

double ScaleSpace::sigma_at(int octave, double layer) const {
  return base_sigma * std::pow(2.0, octave + layer / scales_per_octave);
}

bool feature_less(const SiftFeature& a, const SiftFeature& b) {
  if (a.scale != b.scale) return a.scale < b.scale;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  if (a.orientation != b.orientation) return a.orientation < b.orientation;
  return a.descriptor < b.descriptor;
}

ScaleSpace build_scale_space(const GrayImage& img, const SiftConfig& config) {
  if (!img.valid()) throw std::runtime_error("build_scale_space: invalid image");
  const int min_dim = std::min(img.width, img.height);
  if (min_dim < config.min_image_size)
    throw std::runtime_error("build_scale_space: image too small");

  const int s = config.scales_per_octave;
  if (s < 1) throw std::runtime_error("build_scale_space: scales_per_octave must be >= 1");
  const int octaves = static_cast<int>(std::floor(std::log2(min_dim))) -
                      static_cast<int>(std::floor(std::log2(config.min_octave_size))) + 1;

  ScaleSpace ss;
  ss.scales_per_octave = s;
  ss.base_sigma = config.base_sigma;
  ss.octaves.resize(octaves);

  const double k = std::pow(2.0, 1.0 / s);
  for (int o = 0; o < octaves; ++o) {
    auto& oct = ss.octaves[o];
    oct.gauss.reserve(s + 3);
    if (o == 0) {
      const double delta =
          std::sqrt(std::max(0.0, config.base_sigma * config.base_sigma -
                                      config.input_blur * config.input_blur));
      oct.gauss.push_back(gaussian_blur(img, delta));
    } else {
      // layer s of the previous octave has exactly twice this octave's base blur
      oct.gauss.push_back(downsample_half(ss.octaves[o - 1].gauss[s]));
    }
    for (int i = 1; i < s + 3; ++i) {
      const double prev = config.base_sigma * std::pow(k, i - 1);
      const double next = config.base_sigma * std::pow(k, i);
      const double delta = std::sqrt(next * next - prev * prev);
      oct.gauss.push_back(gaussian_blur(oct.gauss.back(), delta));
    }
    oct.dog.reserve(s + 2);
    for (int i = 0; i < s + 2; ++i) {
      GrayImage d(oct.gauss[i].width, oct.gauss[i].height);
      for (size_t p = 0; p < d.pixels.size(); ++p)
        d.pixels[p] = oct.gauss[i + 1].pixels[p] - oct.gauss[i].pixels[p];
      oct.dog.push_back(std::move(d));
    }
  }
  return ss;
}

std::vector<ExtremumCandidate> detect_extrema(const ScaleSpace& ss, const SiftConfig& config) {
  std::vector<ExtremumCandidate> out;
  const double pre_threshold = 0.5 * config.contrast_threshold;
  for (int o = 0; o < static_cast<int>(ss.octaves.size()); ++o) {
    const auto& oct = ss.octaves[o];
    const int layers = static_cast<int>(oct.dog.size());
    for (int l = 1; l + 1 < layers; ++l) {
      const int w = oct.dog[l].width, h = oct.dog[l].height;
      for (int y = 1; y + 1 < h; ++y) {
        for (int x = 1; x + 1 < w; ++x) {
          const double v = dog_at(oct, l, x, y);
          if (std::abs(v) <= pre_threshold) continue;
          bool is_max = v > 0, is_min = v < 0;
          for (int dl = -1; dl <= 1 && (is_max || is_min); ++dl)
            for (int dy = -1; dy <= 1 && (is_max || is_min); ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                if (dl == 0 && dy == 0 && dx == 0) continue;
                const double nb = dog_at(oct, l + dl, x + dx, y + dy);
                if (v <= nb) is_max = false;
                if (v >= nb) is_min = false;
                if (!is_max && !is_min) break;
              }
          if (is_max || is_min) out.push_back({o, l, x, y});
        }
      }
    }
  }
  return out;
}

std::vector<Keypoint> localize_and_filter(const std::vector<ExtremumCandidate>& candidates,
                                          const ScaleSpace& ss, const SiftConfig& config) {
  std::vector<Keypoint> out;
  const int s = ss.scales_per_octave;
  const double r = config.edge_ratio;
  const double edge_limit = (r + 1.0) * (r + 1.0) / r;

  for (const auto& cand : candidates) {
    const auto& oct = ss.octaves[cand.octave];
    const int w = oct.dog[0].width, h = oct.dog[0].height;
    int x = cand.x, y = cand.y, l = cand.layer;

    Eigen::Vector3d grad, offset;
    bool converged = false;
    for (int attempt = 0; attempt < 5; ++attempt) {
      const double v = dog_at(oct, l, x, y);
      grad << 0.5 * (dog_at(oct, l, x + 1, y) - dog_at(oct, l, x - 1, y)),
          0.5 * (dog_at(oct, l, x, y + 1) - dog_at(oct, l, x, y - 1)),
          0.5 * (dog_at(oct, l + 1, x, y) - dog_at(oct, l - 1, x, y));

      Eigen::Matrix3d hess;
      const double dxx = dog_at(oct, l, x + 1, y) + dog_at(oct, l, x - 1, y) - 2 * v;
      const double dyy = dog_at(oct, l, x, y + 1) + dog_at(oct, l, x, y - 1) - 2 * v;
      const double dss = dog_at(oct, l + 1, x, y) + dog_at(oct, l - 1, x, y) - 2 * v;
      const double dxy = 0.25 * (dog_at(oct, l, x + 1, y + 1) - dog_at(oct, l, x - 1, y + 1) -
                                 dog_at(oct, l, x + 1, y - 1) + dog_at(oct, l, x - 1, y - 1));
      const double dxs = 0.25 * (dog_at(oct, l + 1, x + 1, y) - dog_at(oct, l + 1, x - 1, y) -
                                 dog_at(oct, l - 1, x + 1, y) + dog_at(oct, l - 1, x - 1, y));
      const double dys = 0.25 * (dog_at(oct, l + 1, x, y + 1) - dog_at(oct, l + 1, x, y - 1) -
                                 dog_at(oct, l - 1, x, y + 1) + dog_at(oct, l - 1, x, y - 1));
      hess << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;

      const double det = hess.determinant();
      if (std::abs(det) < 1e-20) break;
      offset = hess.partialPivLu().solve(-grad);

      if (std::abs(offset(0)) < 0.5 && std::abs(offset(1)) < 0.5 && std::abs(offset(2)) < 0.5) {
        converged = true;
        break;
      }
      // re-anchor one step toward the interpolated extremum
      x += static_cast<int>(std::lround(std::clamp(offset(0), -1.0, 1.0)));
      y += static_cast<int>(std::lround(std::clamp(offset(1), -1.0, 1.0)));
      l += static_cast<int>(std::lround(std::clamp(offset(2), -1.0, 1.0)));
      if (x < 1 || x + 1 >= w || y < 1 || y + 1 >= h || l < 1 || l > s) break;
    }
    if (!converged) continue;

    const double v = dog_at(oct, l, x, y);
    const double contrast = v + 0.5 * grad.dot(offset);
    if (std::abs(contrast) < config.contrast_threshold) continue;

    // principal-curvature (edge) rejection on the spatial Hessian
    const double dxx = dog_at(oct, l, x + 1, y) + dog_at(oct, l, x - 1, y) - 2 * v;
    const double dyy = dog_at(oct, l, x, y + 1) + dog_at(oct, l, x, y - 1) - 2 * v;
    const double dxy = 0.25 * (dog_at(oct, l, x + 1, y + 1) - dog_at(oct, l, x - 1, y + 1) -
                               dog_at(oct, l, x + 1, y - 1) + dog_at(oct, l, x - 1, y - 1));
    const double tr = dxx + dyy;
    const double det2 = dxx * dyy - dxy * dxy;
    if (det2 <= 0.0 || tr * tr / det2 >= edge_limit) continue;

    Keypoint kp;
    kp.octave = cand.octave;
    kp.layer = l;
    kp.x = x + offset(0);
    kp.y = y + offset(1);
    kp.layer_offset = offset(2);
    kp.contrast = contrast;
    kp.sigma = ss.sigma_at(cand.octave, l + offset(2));
    if (kp.x < 1.0 || kp.x > w - 2.0 || kp.y < 1.0 || kp.y > h - 2.0) continue;
    out.push_back(kp);
  }
  return out;
}

std::vector<Keypoint> assign_orientations(const Keypoint& kp, const ScaleSpace& ss,
                                          const SiftConfig& config) {
  (void)config;
  constexpr int kBins = 36;
  const auto& oct = ss.octaves[kp.octave];
  const GrayImage& g = oct.gauss[orientation_gauss_layer(kp, ss)];

  const double sigma_rel = kp.sigma / std::pow(2.0, kp.octave);
  const double win_sigma = 1.5 * sigma_rel;
  const int radius = std::max(1, static_cast<int>(std::lround(3.0 * win_sigma)));
  const int cx = static_cast<int>(std::lround(kp.x));
  const int cy = static_cast<int>(std::lround(kp.y));

  double hist[kBins] = {0.0};
  for (int iy = cy - radius; iy <= cy + radius; ++iy) {
    if (iy < 1 || iy + 1 >= g.height) continue;
    for (int ix = cx - radius; ix <= cx + radius; ++ix) {
      if (ix < 1 || ix + 1 >= g.width) continue;
      double dx, dy;
      gradient_at(g, ix, iy, dx, dy);
      const double mag = std::hypot(dx, dy);
      if (mag <= 0.0) continue;
      const double rx = ix - kp.x, ry = iy - kp.y;
      const double wgt = std::exp(-(rx * rx + ry * ry) / (2.0 * win_sigma * win_sigma));
      double theta = std::atan2(dy, dx);
      if (theta < 0) theta += kTwoPi;
      int bin = static_cast<int>(theta / kTwoPi * kBins) % kBins;
      hist[bin] += mag * wgt;
    }
  }

  // circular smoothing, two box passes
  for (int pass = 0; pass < 2; ++pass) {
    double smoothed[kBins];
    for (int b = 0; b < kBins; ++b)
      smoothed[b] = (hist[(b + kBins - 1) % kBins] + hist[b] + hist[(b + 1) % kBins]) / 3.0;
    std::copy(smoothed, smoothed + kBins, hist);
  }

  double peak = 0.0;
  for (double v : hist) peak = std::max(peak, v);
  if (peak <= 0.0) return {};  // flat window: drop the keypoint

  std::vector<Keypoint> out;
  for (int b = 0; b < kBins; ++b) {
    const double prev = hist[(b + kBins - 1) % kBins];
    const double next = hist[(b + 1) % kBins];
    if (hist[b] <= prev || hist[b] <= next || hist[b] < 0.8 * peak) continue;
    const double denom = prev - 2.0 * hist[b] + next;
    const double delta = std::abs(denom) > 1e-12 ? 0.5 * (prev - next) / denom : 0.0;
    double theta = (b + 0.5 + delta) * kTwoPi / kBins;
    theta = std::fmod(theta, kTwoPi);
    if (theta < 0) theta += kTwoPi;
    Keypoint oriented = kp;
    oriented.orientation = theta;
    out.push_back(oriented);
  }
  return out;
}

std::optional<SiftFeature> compute_descriptor(const Keypoint& kp, const ScaleSpace& ss,
                                              const SiftConfig& config, const Mask* support) {
  constexpr int kGrid = 4;    // spatial bins per side
  constexpr int kOrient = 8;  // orientation bins
  const auto& oct = ss.octaves[kp.octave];
  const GrayImage& g = oct.gauss[orientation_gauss_layer(kp, ss)];
  const double octave_scale = std::pow(2.0, kp.octave);

  const double sigma_rel = kp.sigma / octave_scale;
  const double bin_width = 3.0 * sigma_rel;
  const double radius = bin_width * std::sqrt(2.0) * (kGrid + 1) * 0.5;
  const double cos_t = std::cos(kp.orientation);
  const double sin_t = std::sin(kp.orientation);

  double hist[kGrid][kGrid][kOrient] = {};
  long total_samples = 0, off_support = 0;

  const int x_lo = static_cast<int>(std::floor(kp.x - radius));
  const int x_hi = static_cast<int>(std::ceil(kp.x + radius));
  const int y_lo = static_cast<int>(std::floor(kp.y - radius));
  const int y_hi = static_cast<int>(std::ceil(kp.y + radius));

  for (int iy = y_lo; iy <= y_hi; ++iy) {
    for (int ix = x_lo; ix <= x_hi; ++ix) {
      const double dx_px = ix - kp.x;
      const double dy_px = iy - kp.y;
      // rotate into the keypoint frame, in spatial-bin units
      const double u = (cos_t * dx_px + sin_t * dy_px) / bin_width;
      const double v = (-sin_t * dx_px + cos_t * dy_px) / bin_width;
      const double cbin = u + kGrid / 2.0 - 0.5;  // in (-1, kGrid) when valid
      const double rbin = v + kGrid / 2.0 - 0.5;
      if (cbin <= -1.0 || cbin >= kGrid || rbin <= -1.0 || rbin >= kGrid) continue;
      ++total_samples;

      const bool inside = ix >= 0 && ix < g.width && iy >= 0 && iy < g.height;
      bool on_support = inside;
      if (inside && support) {
        const int px = std::clamp(static_cast<int>(std::lround(ix * octave_scale)), 0,
                                  support->width - 1);
        const int py = std::clamp(static_cast<int>(std::lround(iy * octave_scale)), 0,
                                  support->height - 1);
        on_support = support->at(px, py);
      }
      if (!on_support) {
        ++off_support;
        continue;
      }

      const int sx = std::clamp(ix, 1, g.width - 2);
      const int sy = std::clamp(iy, 1, g.height - 2);
      double dx, dy;
      gradient_at(g, sx, sy, dx, dy);
      const double mag = std::hypot(dx, dy);
      if (mag <= 0.0) continue;
      double theta = std::atan2(dy, dx) - kp.orientation;
      theta = std::fmod(theta, kTwoPi);
      if (theta < 0) theta += kTwoPi;

      const double wgt = std::exp(-(u * u + v * v) / (2.0 * (kGrid / 2.0) * (kGrid / 2.0)));
      const double obin = theta / kTwoPi * kOrient;
      const double contrib = mag * wgt;

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      const int o0 = static_cast<int>(std::floor(obin)) % kOrient;
      const double rf = rbin - r0;
      const double cf = cbin - c0;
      const double of = obin - std::floor(obin);

      for (int dr = 0; dr <= 1; ++dr) {
        const int rr = r0 + dr;
        if (rr < 0 || rr >= kGrid) continue;
        const double wr = dr ? rf : 1.0 - rf;
        for (int dc = 0; dc <= 1; ++dc) {
          const int cc = c0 + dc;
          if (cc < 0 || cc >= kGrid) continue;
          const double wc = dc ? cf : 1.0 - cf;
          for (int dd = 0; dd <= 1; ++dd) {
            const int oo = (o0 + dd) % kOrient;
            const double wo = dd ? of : 1.0 - of;
            hist[rr][cc][oo] += contrib * wr * wc * wo;
          }
        }
      }
    }
  }

  if (total_samples == 0) return std::nullopt;
  if (static_cast<double>(off_support) / static_cast<double>(total_samples) >
      config.boundary_overlap_limit)
    return std::nullopt;

  std::array<double, 128> desc{};
  for (int r = 0; r < kGrid; ++r)
    for (int c = 0; c < kGrid; ++c)
      for (int o = 0; o < kOrient; ++o) desc[(r * kGrid + c) * kOrient + o] = hist[r][c][o];

  double norm_sq = 0.0;
  for (double d : desc) norm_sq += d * d;
  if (norm_sq <= 1e-24) return std::nullopt;

  // Clamp-and-renormalize taken to its fixed point: saturate the largest
  // bins at the cap and rescale the remainder to restore unit norm. Windows
  // with too little gradient diversity cannot satisfy the cap and drop out.
  const double cap = config.descriptor_clamp;
  std::array<int, 128> order;
  for (int i = 0; i < 128; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return desc[a] > desc[b]; });

  double residual_sq = norm_sq;
  int saturated = 0;
  double alpha = 0.0;
  while (true) {
    const double remaining_sq = 1.0 - cap * cap * saturated;
    if (remaining_sq <= 1e-12 || residual_sq <= 1e-24) return std::nullopt;
    alpha = std::sqrt(remaining_sq / residual_sq);
    if (saturated == 128 || alpha * desc[order[saturated]] <= cap) break;
    residual_sq -= desc[order[saturated]] * desc[order[saturated]];
    ++saturated;
  }
  for (int i = 0; i < saturated; ++i) desc[order[i]] = cap;
  for (int i = saturated; i < 128; ++i) desc[order[i]] *= alpha;

  SiftFeature f;
  f.x = kp.x * octave_scale;
  f.y = kp.y * octave_scale;
  f.scale = kp.sigma;
  f.orientation = kp.orientation;
  for (int i = 0; i < 128; ++i) f.descriptor[i] = static_cast<float>(desc[i]);
  // keep the stored floats unit-norm
  double fnorm = 0.0;
  for (float d : f.descriptor) fnorm += static_cast<double>(d) * d;
  fnorm = std::sqrt(fnorm);
  if (fnorm <= 1e-12) return std::nullopt;
  for (float& d : f.descriptor) d = static_cast<float>(d / fnorm);
  return f;
}

std::vector<SiftFeature> extract_sift(const GrayImage& patch, const SiftConfig& config,
                                      const Mask* support, double offset_x, double offset_y) {
  if (!patch.valid()) throw std::runtime_error("extract_sift: invalid image");
  if (std::min(patch.width, patch.height) < config.min_image_size) return {};

  GrayImage input = patch;
  SiftConfig cfg = config;
  double coord_scale = 1.0;
  if (config.upsample) {
    input = scale_bilinear(patch, 2.0);
    cfg.input_blur = 2.0 * config.input_blur;
    cfg.upsample = false;
    coord_scale = 0.5;
  }

  const ScaleSpace ss = build_scale_space(input, cfg);
  const auto candidates = detect_extrema(ss, cfg);
  const auto keypoints = localize_and_filter(candidates, ss, cfg);

  // support mask lives in original patch coordinates; rescale once if needed
  Mask scaled_support;
  const Mask* sup = support;
  if (support && config.upsample) {
    scaled_support = Mask(input.width, input.height);
    for (int y = 0; y < input.height; ++y)
      for (int x = 0; x < input.width; ++x)
        scaled_support.set(x, y,
                           support->at(std::min(x / 2, support->width - 1),
                                       std::min(y / 2, support->height - 1)));
    sup = &scaled_support;
  }

  std::vector<SiftFeature> out;
  for (const Keypoint& kp : keypoints) {
    for (const Keypoint& oriented : assign_orientations(kp, ss, cfg)) {
      if (auto f = compute_descriptor(oriented, ss, cfg, sup)) {
        f->x = f->x * coord_scale + offset_x;
        f->y = f->y * coord_scale + offset_y;
        f->scale *= coord_scale;
        out.push_back(*f);
      }
    }
  }
  std::sort(out.begin(), out.end(), feature_less);
  return out;
}

std::string dump_features(const std::vector<SiftFeature>& features) {
  std::vector<SiftFeature> sorted = features;
  std::sort(sorted.begin(), sorted.end(), feature_less);
  std::ostringstream out;
  char buf[32];
  for (const auto& f : sorted) {
    std::snprintf(buf, sizeof(buf), "%.6g", f.x);
    out << buf;
    std::snprintf(buf, sizeof(buf), " %.6g", f.y);
    out << buf;
    std::snprintf(buf, sizeof(buf), " %.6g", f.scale);
    out << buf;
    std::snprintf(buf, sizeof(buf), " %.6g", f.orientation);
    out << buf;
    for (float d : f.descriptor) {
      std::snprintf(buf, sizeof(buf), " %.6g", static_cast<double>(d));
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

std::vector<SiftFeature> parse_features(const std::string& text) {
  std::vector<SiftFeature> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    SiftFeature f;
    if (!(ls >> f.x >> f.y >> f.scale >> f.orientation))
      throw std::runtime_error("parse_features: malformed line");
    for (int i = 0; i < 128; ++i)
      if (!(ls >> f.descriptor[i])) throw std::runtime_error("parse_features: short descriptor");
    out.push_back(f);
  }
  return out;
}

}  // namespace earlock
