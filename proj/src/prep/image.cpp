#include "sfseg/image.hpp"

#include <png.h>

#include <cstring>
#include <memory>

namespace sfseg {

RgbImage::RgbImage(int w, int h, Rgb fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
  if (w < 1 || h < 1) throw DimensionError("image size must be at least 1x1");
}

namespace {

struct PngImage {
  png_image image;
  PngImage() {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + png.image.message);
  }
  png.image.format = PNG_FORMAT_RGB;
  // Composite any alpha onto white, the sketch background.
  png_color white{255, 255, 255};
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, &white, buf.data(), 0, nullptr)) {
    throw IoError("cannot decode PNG " + path.string() + ": " + png.image.message);
  }
  RgbImage out(static_cast<int>(png.image.width), static_cast<int>(png.image.height));
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = {buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]};
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(image.width);
  png.image.height = static_cast<png_uint_32>(image.height);
  png.image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(image.pixels.size() * 3);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    buf[3 * i] = image.pixels[i].r;
    buf[3 * i + 1] = image.pixels[i].g;
    buf[3 * i + 2] = image.pixels[i].b;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + png.image.message);
  }
}

RgbImage render(const LabelMap& labels) {
  if (!labels.palette) throw StateError("render: label map has no palette");
  RgbImage out(labels.width, labels.height);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) out.pixels[i] = (*labels.palette)[labels.labels[i]].color;
  return out;
}

}  // namespace sfseg
