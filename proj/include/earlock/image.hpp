#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace earlock {

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

// 8-bit color raster, row-major.
struct ColorImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  ColorImage() = default;
  ColorImage(int w, int h, Rgb fill = {0, 0, 0})
      : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

  Rgb& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  const Rgb& at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  bool valid() const {
    return width > 0 && height > 0 && pixels.size() == static_cast<size_t>(width) * height;
  }
};

// Intensity raster with values in [0,1], row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

  double& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  bool valid() const {
    return width > 0 && height > 0 && pixels.size() == static_cast<size_t>(width) * height;
  }
};

// Crop mask; true marks pixels inside the ear region.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;

  Mask() = default;
  Mask(int w, int h, bool fill = false)
      : width(w), height(h), bits(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

  static Mask full(int w, int h) { return Mask(w, h, true); }

  bool at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  size_t count() const;
};

// --- File I/O -------------------------------------------------------------

// Decodes PNG or binary PPM (P6, maxval 255), chosen by file magic.
ColorImage load_image(const std::string& path);

ColorImage load_ppm(const std::string& path);
ColorImage load_png(const std::string& path);

// P6 layout is fixed: "P6\n{w} {h}\n255\n" + w*h*3 bytes row-major.
void save_ppm(const ColorImage& img, const std::string& path);
void save_png(const ColorImage& img, const std::string& path);
void save_png(const GrayImage& img, const std::string& path);

// Reads a mask image (any supported raster); a pixel is "in" when its
// luminance is above half scale. Dimensions must match the paired image.
Mask load_mask(const std::string& path, int width, int height);
void save_mask_png(const Mask& mask, const std::string& path);

// --- Pixel operations -----------------------------------------------------

// Pixels where the mask bit is set, in row-major order.
// Throws on dimension mismatch and when the mask selects nothing.
std::vector<Rgb> apply_mask(const ColorImage& img, const Mask& mask);

enum class GrayMode {
  kLuminance,  // 0.299 r + 0.587 g + 0.114 b
  kContrast,   // luminance plus dominant-chrominance projection
};

GrayImage decolorize(const ColorImage& img, GrayMode mode = GrayMode::kLuminance);

// Empirical-CDF remapping over 256 bins of [0,1].
GrayImage histogram_equalize(const GrayImage& img);

// Bilinear resampling around the image center; samples outside the source
// keep `fill`. Used by jittered dataset synthesis and the stability tests.
GrayImage rotate_bilinear(const GrayImage& img, double radians, double fill = 0.0);
GrayImage scale_bilinear(const GrayImage& img, double factor);

}  // namespace earlock
