#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "sfseg/image.hpp"
#include "sfseg/labels.hpp"

namespace sfseg {

// Inclusive pixel rectangle.
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool operator==(const Rect&) const = default;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  // Zero outside the raster.
  std::uint8_t get(int x, int y) const {
    return x < 0 || y < 0 || x >= width || y >= height ? 0 : at(x, y);
  }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

struct PrepConfig {
  int canvas = 800;
  int resize_min = 600;
  int resize_max = 700;
  Rgb background = kWhite;
  std::uint64_t seed = 0;
  // Per-channel distance from the background at which a pixel is a stroke.
  int stroke_threshold = 32;

  // Throws ConfigError naming the field.
  void validate() const;
};

/// Smallest rectangle holding every pixel that differs from `background`.
/// Throws EmptySketchError when there is none.
Rect bounding_box(const RgbImage& img, Rgb background = kWhite);

RgbImage crop(const RgbImage& img, const Rect& r);

// Separable triangle filter widened by the scale factor when shrinking.
RgbImage resize_bilinear(const RgbImage& img, int width, int height);
RgbImage resize_nearest(const RgbImage& img, int width, int height);

struct ThinOptions {
  // Keep at least one pixel on each extreme row and column of the input's
  // bounding box, so thinning never shrinks the sketch extent.
  bool preserve_extent = false;
};

/// Zhang-Suen thinning to 1 px, run to a fixpoint. Deletions are re-checked
/// one at a time against the current raster and must keep the pixel 8-simple;
/// leftover 2x2 blocks are then broken up wherever a simple pixel exists.
BinaryMask thin(const BinaryMask& mask, ThinOptions options = {});

// Nearest palette entry per pixel.
LabelMap recolor(const RgbImage& img, std::shared_ptr<const Palette> palette);

struct NormalizedSketch {
  RgbImage sketch;                // black strokes on white, canvas x canvas
  std::optional<LabelMap> labels;
  int scaled_size = 0;            // longest side after the random resize
};

/// Crop, random aspect-preserving resize, centre paste, thinning and recolor.
/// The longest side is drawn from [resize_min, resize_max] by an Rng seeded
/// with cfg.seed.
NormalizedSketch normalize(const RgbImage& img, const RgbImage* labels, const PrepConfig& cfg,
                           std::shared_ptr<const Palette> palette = builtin_palette());

// Pixels whose largest channel distance from `background` reaches `threshold`.
BinaryMask stroke_mask(const RgbImage& img, Rgb background = kWhite, int threshold = 32);

}  // namespace sfseg
