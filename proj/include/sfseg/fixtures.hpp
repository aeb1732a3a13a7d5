#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfseg/image.hpp"

namespace sfseg {

/// Synthetic line-drawing with its part raster, both size x size.
struct FixtureSample {
  std::string category;
  std::string id;
  RgbImage sketch;  // black strokes on white
  RgbImage labels;  // unified palette colors on the stroke pixels
};

// Airplane, Lamp, Table.
std::vector<std::string> fixture_categories();

FixtureSample make_fixture(const std::string& category, int index, std::uint64_t seed, int size = 96);
std::vector<FixtureSample> make_fixture_set(int per_category, std::uint64_t seed, int size = 96);

// <root>/<category>/sketches/<id>.png and <root>/<category>/labels/<id>.png
void write_raw_dataset(const std::filesystem::path& root, const std::vector<FixtureSample>& samples);

}  // namespace sfseg
