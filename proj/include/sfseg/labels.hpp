#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sfseg {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;

  auto operator<=>(const Rgb&) const = default;
  std::string str() const;
};

inline constexpr Rgb kWhite{255, 255, 255};

using ClassIndex = std::uint8_t;

struct PaletteEntry {
  std::string name;
  std::vector<std::string> scope;  // categories using the part; empty = all
  Rgb color;
};

/// Bijection class index <-> part name <-> RGB. Index 0 is the background.
class Palette {
 public:
  static constexpr ClassIndex kBackground = 0;

  explicit Palette(std::vector<PaletteEntry> entries);

  // Parses the palette text format (see data/schema/palette.csv).
  static Palette parse(std::string_view text);
  static Palette load(const std::string& path);

  std::size_t size() const { return entries_.size(); }
  const PaletteEntry& operator[](ClassIndex index) const { return entries_.at(index); }
  const std::vector<PaletteEntry>& entries() const { return entries_; }

  std::optional<ClassIndex> find(std::string_view name) const;
  std::optional<ClassIndex> find(Rgb color) const;
  // Minimal Euclidean RGB distance; ties go to the lowest index.
  ClassIndex nearest(Rgb color) const;

  bool operator==(const Palette& other) const;

 private:
  std::vector<PaletteEntry> entries_;
};

/// The unified 25-class palette shipped with the library.
std::shared_ptr<const Palette> builtin_palette();

/// Per-pixel class raster tied to its palette.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<ClassIndex> labels;  // row-major
  std::shared_ptr<const Palette> palette;

  LabelMap() = default;
  LabelMap(int w, int h, std::shared_ptr<const Palette> p, ClassIndex fill = Palette::kBackground)
      : width(w), height(h), labels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill),
        palette(std::move(p)) {}

  ClassIndex at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  ClassIndex& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t pixel_count() const { return labels.size(); }
};

}  // namespace sfseg
