#pragma once

#include <filesystem>
#include <vector>

#include "sfseg/errors.hpp"
#include "sfseg/labels.hpp"

namespace sfseg {

/// 8-bit RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = kWhite);

  Rgb at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const RgbImage&) const = default;
};

using SketchImage = RgbImage;

RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

// Each pixel painted with its class color.
RgbImage render(const LabelMap& labels);

}  // namespace sfseg
