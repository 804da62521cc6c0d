#include "earlock/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace earlock {

size_t Mask::count() const {
  return static_cast<size_t>(std::count_if(bits.begin(), bits.end(), [](uint8_t b) { return b != 0; }));
}

namespace {

void check_dims(int w, int h, const std::string& what) {
  if (w <= 0 || h <= 0) throw std::runtime_error(what + ": zero-dimension image");
}

// Skips PPM whitespace and '#' comment lines.
int ppm_next_token(std::istream& in, std::string& tok) {
  tok.clear();
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok.empty() ? EOF : 0;
}

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

void write_png_rgb(const std::string& path, int w, int h, const std::vector<uint8_t>& rows) {
  PngWriteCloser c;
  c.fp = std::fopen(path.c_str(), "wb");
  if (!c.fp) throw std::runtime_error("cannot open for writing: " + path);
  c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!c.png) throw std::runtime_error("png_create_write_struct failed");
  c.info = png_create_info_struct(c.png);
  if (!c.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(c.png))) throw std::runtime_error("png write error: " + path);
  png_init_io(c.png, c.fp);
  png_set_IHDR(c.png, c.info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(c.png, c.info);
  std::vector<png_bytep> row_ptrs(h);
  for (int y = 0; y < h; ++y)
    row_ptrs[y] = const_cast<png_bytep>(rows.data() + static_cast<size_t>(y) * w * 3);
  png_write_image(c.png, row_ptrs.data());
  png_write_end(c.png, nullptr);
}

}  // namespace

ColorImage load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing file: " + path);
  std::string tok;
  if (ppm_next_token(in, tok) == EOF || tok != "P6")
    throw std::runtime_error("not a binary PPM (P6): " + path);
  std::string ws, hs, maxs;
  if (ppm_next_token(in, ws) == EOF || ppm_next_token(in, hs) == EOF ||
      ppm_next_token(in, maxs) == EOF)
    throw std::runtime_error("truncated PPM header: " + path);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(ws);
    h = std::stoi(hs);
    maxval = std::stoi(maxs);
  } catch (const std::exception&) {
    throw std::runtime_error("malformed PPM header: " + path);
  }
  check_dims(w, h, path);
  if (maxval != 255) throw std::runtime_error("unsupported PPM maxval (want 255): " + path);

  ColorImage img(w, h);
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size())
    throw std::runtime_error("truncated PPM pixel data: " + path);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = {raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]};
  return img;
}

void save_ppm(const ColorImage& img, const std::string& path) {
  if (!img.valid()) throw std::runtime_error("invalid image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> raw;
  raw.reserve(img.pixels.size() * 3);
  for (const Rgb& p : img.pixels) {
    raw.push_back(p.r);
    raw.push_back(p.g);
    raw.push_back(p.b);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

ColorImage load_png(const std::string& path) {
  PngReadCloser c;
  c.fp = std::fopen(path.c_str(), "rb");
  if (!c.fp) throw std::runtime_error("missing file: " + path);

  std::array<uint8_t, 8> sig{};
  if (std::fread(sig.data(), 1, 8, c.fp) != 8 || png_sig_cmp(sig.data(), 0, 8) != 0)
    throw std::runtime_error("not a PNG file: " + path);

  c.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!c.png) throw std::runtime_error("png_create_read_struct failed");
  c.info = png_create_info_struct(c.png);
  if (!c.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(c.png))) throw std::runtime_error("undecodable PNG: " + path);

  png_init_io(c.png, c.fp);
  png_set_sig_bytes(c.png, 8);
  png_read_info(c.png, c.info);

  const int w = static_cast<int>(png_get_image_width(c.png, c.info));
  const int h = static_cast<int>(png_get_image_height(c.png, c.info));
  check_dims(w, h, path);

  // Normalize whatever variant we got to 8-bit RGB.
  const png_byte color_type = png_get_color_type(c.png, c.info);
  const png_byte bit_depth = png_get_bit_depth(c.png, c.info);
  if (bit_depth == 16) png_set_strip_16(c.png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(c.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(c.png);
  if (png_get_valid(c.png, c.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(c.png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(c.png);
  png_set_strip_alpha(c.png);
  png_read_update_info(c.png, c.info);

  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  std::vector<png_bytep> row_ptrs(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = raw.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(c.png, row_ptrs.data());

  ColorImage img(w, h);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = {raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]};
  return img;
}

void save_png(const ColorImage& img, const std::string& path) {
  if (!img.valid()) throw std::runtime_error("invalid image");
  std::vector<uint8_t> raw;
  raw.reserve(img.pixels.size() * 3);
  for (const Rgb& p : img.pixels) {
    raw.push_back(p.r);
    raw.push_back(p.g);
    raw.push_back(p.b);
  }
  write_png_rgb(path, img.width, img.height, raw);
}

void save_png(const GrayImage& img, const std::string& path) {
  if (!img.valid()) throw std::runtime_error("invalid image");
  std::vector<uint8_t> raw;
  raw.reserve(img.pixels.size() * 3);
  for (double v : img.pixels) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    const uint8_t b = static_cast<uint8_t>(std::lround(clamped * 255.0));
    raw.push_back(b);
    raw.push_back(b);
    raw.push_back(b);
  }
  write_png_rgb(path, img.width, img.height, raw);
}

ColorImage load_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("missing file: " + path);
  char magic[2] = {0, 0};
  probe.read(magic, 2);
  probe.close();
  if (magic[0] == 'P' && magic[1] == '6') return load_ppm(path);
  return load_png(path);
}

Mask load_mask(const std::string& path, int width, int height) {
  const ColorImage img = load_image(path);
  if (img.width != width || img.height != height)
    throw std::runtime_error("mask dimensions do not match image: " + path);
  Mask m(width, height);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const Rgb& p = img.pixels[i];
    const double lum = 0.299 * p.r + 0.587 * p.g + 0.114 * p.b;
    m.bits[i] = lum > 127.5 ? 1 : 0;
  }
  return m;
}

void save_mask_png(const Mask& mask, const std::string& path) {
  ColorImage img(mask.width, mask.height);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const uint8_t v = mask.bits[i] ? 255 : 0;
    img.pixels[i] = {v, v, v};
  }
  save_png(img, path);
}

std::vector<Rgb> apply_mask(const ColorImage& img, const Mask& mask) {
  if (!img.valid()) throw std::runtime_error("invalid image");
  if (img.width != mask.width || img.height != mask.height)
    throw std::runtime_error("apply_mask: dimension mismatch");
  std::vector<Rgb> out;
  out.reserve(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i)
    if (mask.bits[i]) out.push_back(img.pixels[i]);
  if (out.empty()) throw std::runtime_error("apply_mask: mask selects no pixels");
  return out;
}

GrayImage decolorize(const ColorImage& img, GrayMode mode) {
  if (!img.valid()) throw std::runtime_error("invalid image");
  GrayImage out(img.width, img.height);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const Rgb& p = img.pixels[i];
    out.pixels[i] = (0.299 * p.r + 0.587 * p.g + 0.114 * p.b) / 255.0;
  }
  if (mode == GrayMode::kLuminance) return out;

  // Contrast-enhancing variant: add the projection of chrominance onto its
  // dominant axis, then rescale back into [0,1]. Keeps chromatic edges that
  // plain luminance flattens.
  const size_t n = img.pixels.size();
  double mean_pb = 0.0, mean_pr = 0.0;
  std::vector<double> pb(n), pr(n);
  for (size_t i = 0; i < n; ++i) {
    const Rgb& p = img.pixels[i];
    pb[i] = (-0.168736 * p.r - 0.331264 * p.g + 0.5 * p.b) / 255.0;
    pr[i] = (0.5 * p.r - 0.418688 * p.g - 0.081312 * p.b) / 255.0;
    mean_pb += pb[i];
    mean_pr += pr[i];
  }
  mean_pb /= static_cast<double>(n);
  mean_pr /= static_cast<double>(n);
  double sbb = 0.0, sbr = 0.0, srr = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double db = pb[i] - mean_pb;
    const double dr = pr[i] - mean_pr;
    sbb += db * db;
    sbr += db * dr;
    srr += dr * dr;
  }
  // Leading eigenvector of the 2x2 chrominance covariance.
  const double tr = sbb + srr;
  const double det = sbb * srr - sbr * sbr;
  const double lam = 0.5 * tr + std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  double ax = 1.0, ay = 0.0;
  if (std::abs(sbr) > 1e-12) {
    ax = lam - srr;
    ay = sbr;
  } else if (srr > sbb) {
    ax = 0.0;
    ay = 1.0;
  }
  const double norm = std::hypot(ax, ay);
  if (norm > 1e-12) {
    ax /= norm;
    ay /= norm;
  }
  constexpr double kChromaGain = 0.5;
  double lo = 1e300, hi = -1e300;
  for (size_t i = 0; i < n; ++i) {
    const double proj = ax * (pb[i] - mean_pb) + ay * (pr[i] - mean_pr);
    out.pixels[i] += kChromaGain * proj;
    lo = std::min(lo, out.pixels[i]);
    hi = std::max(hi, out.pixels[i]);
  }
  const double span = hi - lo;
  for (double& v : out.pixels) v = span > 1e-12 ? (v - lo) / span : std::clamp(v, 0.0, 1.0);
  return out;
}

GrayImage histogram_equalize(const GrayImage& img) {
  if (!img.valid()) throw std::runtime_error("invalid image");
  constexpr int kBins = 256;
  std::array<size_t, kBins> hist{};
  auto bin_of = [](double v) {
    const int b = static_cast<int>(std::clamp(v, 0.0, 1.0) * kBins);
    return std::min(b, kBins - 1);
  };
  for (double v : img.pixels) ++hist[bin_of(v)];

  std::array<double, kBins> cdf{};
  const double total = static_cast<double>(img.pixels.size());
  double cum = 0.0;
  for (int b = 0; b < kBins; ++b) {
    cum += static_cast<double>(hist[b]);
    cdf[b] = cum / total;
  }

  GrayImage out(img.width, img.height);
  for (size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = cdf[bin_of(img.pixels[i])];
  return out;
}

namespace {

double sample_bilinear(const GrayImage& img, double x, double y, double fill) {
  if (x < 0.0 || y < 0.0 || x > img.width - 1 || y > img.height - 1) return fill;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  return (1 - fx) * (1 - fy) * img.at(x0, y0) + fx * (1 - fy) * img.at(x1, y0) +
         (1 - fx) * fy * img.at(x0, y1) + fx * fy * img.at(x1, y1);
}

}  // namespace

GrayImage rotate_bilinear(const GrayImage& img, double radians, double fill) {
  if (!img.valid()) throw std::runtime_error("invalid image");
  GrayImage out(img.width, img.height);
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      // inverse map: rotate destination back into the source frame
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = cx + c * dx + s * dy;
      const double sy = cy - s * dx + c * dy;
      out.at(x, y) = sample_bilinear(img, sx, sy, fill);
    }
  }
  return out;
}

GrayImage scale_bilinear(const GrayImage& img, double factor) {
  if (!img.valid()) throw std::runtime_error("invalid image");
  if (factor <= 0.0) throw std::runtime_error("scale factor must be positive");
  const int w = std::max(1, static_cast<int>(std::lround(img.width * factor)));
  const int h = std::max(1, static_cast<int>(std::lround(img.height * factor)));
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(x, y) = sample_bilinear(img, x / factor, y / factor, 0.0);
  return out;
}

}  // namespace earlock
