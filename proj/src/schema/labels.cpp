#include "sfseg/labels.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "records.hpp"

namespace sfseg {

namespace detail {
extern const char* const kBuiltinPaletteText;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace detail

std::string Rgb::str() const {
  return "(" + std::to_string(r) + "," + std::to_string(g) + "," + std::to_string(b) + ")";
}

Palette::Palette(std::vector<PaletteEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw DataError("palette is empty");
  if (entries_.size() > 256) throw DataError("palette has more than 256 entries");
  if (entries_[0].color != kWhite) throw DataError("palette entry 0 must be the white background");
  std::set<Rgb> colors;
  std::set<std::string> names;
  for (const auto& e : entries_) {
    if (!colors.insert(e.color).second) throw DataError("palette color " + e.color.str() + " used twice");
    if (!names.insert(e.name).second) throw DataError("palette name '" + e.name + "' used twice");
  }
}

Palette Palette::parse(std::string_view text) {
  std::vector<PaletteEntry> entries;
  for (const auto& rec : detail::parse_records(text)) {
    if (rec.fields.size() != 5) {
      throw DataError("palette line " + std::to_string(rec.line) + ": expected 5 fields, got " +
                      std::to_string(rec.fields.size()));
    }
    PaletteEntry e{rec.fields[0], {}, detail::parse_rgb(rec, 2)};
    if (rec.fields[1] != "*") {
      std::string_view scope = rec.fields[1];
      std::size_t start = 0;
      while (true) {
        const auto bar = scope.find('|', start);
        e.scope.push_back(detail::trim(scope.substr(start, bar == std::string_view::npos ? scope.npos : bar - start)));
        if (bar == std::string_view::npos) break;
        start = bar + 1;
      }
    }
    entries.push_back(std::move(e));
  }
  return Palette(std::move(entries));
}

Palette Palette::load(const std::string& path) { return parse(detail::read_text_file(path)); }

std::optional<ClassIndex> Palette::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<ClassIndex>(i);
  }
  return std::nullopt;
}

std::optional<ClassIndex> Palette::find(Rgb color) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].color == color) return static_cast<ClassIndex>(i);
  }
  return std::nullopt;
}

ClassIndex Palette::nearest(Rgb color) const {
  auto dist = [&](Rgb c) {
    const int dr = c.r - color.r, dg = c.g - color.g, db = c.b - color.b;
    return dr * dr + dg * dg + db * db;
  };
  std::size_t best = 0;
  int best_d = dist(entries_[0].color);
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    const int d = dist(entries_[i].color);
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return static_cast<ClassIndex>(best);
}

bool Palette::operator==(const Palette& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name || entries_[i].color != other.entries_[i].color) return false;
  }
  return true;
}

std::shared_ptr<const Palette> builtin_palette() {
  static const auto palette = std::make_shared<const Palette>(Palette::parse(detail::kBuiltinPaletteText));
  return palette;
}

}  // namespace sfseg
