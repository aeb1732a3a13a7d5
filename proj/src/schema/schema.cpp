#include "sfseg/schema.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "records.hpp"

namespace sfseg {

namespace detail {
extern const char* const kBuiltinRemapText;
}

RemapTable RemapTable::parse(std::string_view text) {
  std::vector<Row> rows;
  for (const auto& rec : detail::parse_records(text)) {
    const auto n = rec.fields.size();
    const bool ignore = n == 6 && rec.fields[5] == "ignore";
    if (!ignore && n != 9) {
      throw DataError("remap line " + std::to_string(rec.line) + ": expected 9 fields or an 'ignore' target, got " +
                      std::to_string(n) + " fields");
    }
    Row row{rec.fields[0], rec.fields[1], detail::parse_rgb(rec, 2), std::nullopt};
    if (!ignore) row.target = Target{rec.fields[5], detail::parse_rgb(rec, 6)};
    rows.push_back(std::move(row));
  }
  return RemapTable(std::move(rows));
}

RemapTable RemapTable::load(const std::string& path) { return parse(detail::read_text_file(path)); }

std::vector<std::string> RemapTable::categories() const {
  std::vector<std::string> out;
  for (const auto& r : rows_) {
    if (std::find(out.begin(), out.end(), r.category) == out.end()) out.push_back(r.category);
  }
  return out;
}

bool RemapTable::has_category(std::string_view category) const {
  return std::any_of(rows_.begin(), rows_.end(), [&](const Row& r) { return r.category == category; });
}

const RemapTable::Row* RemapTable::find(std::string_view category, Rgb source) const {
  for (const auto& r : rows_) {
    if (r.category == category && r.source == source) return &r;
  }
  return nullptr;
}

std::shared_ptr<const Palette> RemapTable::source_palette(std::string_view category) const {
  if (!has_category(category)) throw DataError("remap table has no category '" + std::string(category) + "'");
  std::vector<PaletteEntry> entries{{"background", {}, kWhite}};
  for (const auto& r : rows_) {
    if (r.category == category) entries.push_back({r.source_name, {std::string(category)}, r.source});
  }
  return std::make_shared<const Palette>(std::move(entries));
}

const RemapTable& builtin_remap_table() {
  static const RemapTable table = RemapTable::parse(detail::kBuiltinRemapText);
  return table;
}

namespace {

std::string list_colors(const std::set<Rgb>& colors) {
  std::string s;
  for (const auto& c : colors) s += (s.empty() ? "" : ", ") + c.str();
  return s;
}

}  // namespace

LabelMap remap(const LabelMap& labels, std::string_view category, const RemapTable& table,
               const std::shared_ptr<const Palette>& unified) {
  if (!labels.palette || !unified) throw StateError("remap: missing palette");
  if (!table.has_category(category)) throw DataError("remap table has no category '" + std::string(category) + "'");
  if (labels.palette == unified || *labels.palette == *unified) return labels;

  // Class-level lookup; only classes actually present must be mapped.
  const auto& src = *labels.palette;
  std::vector<int> lut(src.size(), -1);
  std::vector<bool> present(src.size(), false);
  for (auto c : labels.labels) present.at(c) = true;
  std::set<Rgb> unmapped;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!present[i]) continue;
    const Rgb color = src[static_cast<ClassIndex>(i)].color;
    if (color == kWhite) {
      lut[i] = Palette::kBackground;
      continue;
    }
    const auto* row = table.find(category, color);
    if (!row) {
      unmapped.insert(color);
      continue;
    }
    if (!row->target) {
      lut[i] = Palette::kBackground;
      continue;
    }
    const auto idx = unified->find(row->target->color);
    if (!idx) throw DataError("remap target " + row->target->color.str() + " missing from the unified palette");
    lut[i] = *idx;
  }
  if (!unmapped.empty()) {
    throw UnmappedLabelError("unmapped " + std::string(category) + " label colors: " + list_colors(unmapped));
  }
  LabelMap out(labels.width, labels.height, unified);
  for (std::size_t p = 0; p < labels.labels.size(); ++p) out.labels[p] = static_cast<ClassIndex>(lut[labels.labels[p]]);
  return out;
}

RgbImage remap_raster(const RgbImage& raster, std::string_view category, const RemapTable& table) {
  if (!table.has_category(category)) throw DataError("remap table has no category '" + std::string(category) + "'");
  std::map<Rgb, Rgb> cache;
  std::set<Rgb> unmapped;
  RgbImage out = raster;
  for (auto& px : out.pixels) {
    if (px == kWhite) continue;
    auto it = cache.find(px);
    if (it == cache.end()) {
      const auto* row = table.find(category, px);
      if (!row) {
        unmapped.insert(px);
        continue;
      }
      it = cache.emplace(px, row->target ? row->target->color : kWhite).first;
    }
    px = it->second;
  }
  if (!unmapped.empty()) {
    throw UnmappedLabelError("unmapped " + std::string(category) + " label colors: " + list_colors(unmapped));
  }
  return out;
}

std::size_t SchemaReport::count(SchemaFinding::Kind kind) const {
  return static_cast<std::size_t>(
      std::count_if(findings.begin(), findings.end(), [&](const SchemaFinding& f) { return f.kind == kind; }));
}

SchemaReport validate(const RemapTable& table, const Palette& palette) {
  SchemaReport report;
  using K = SchemaFinding::Kind;
  std::set<std::pair<std::string, Rgb>> seen;
  for (const auto& r : table.rows()) {
    const std::string where = r.category + "/" + r.source_name;
    if (!seen.insert({r.category, r.source}).second) {
      report.findings.push_back({K::Duplicate, where + ": source color " + r.source.str() + " listed twice"});
    }
    if (!r.target) continue;
    const auto idx = palette.find(r.target->color);
    if (!idx) {
      report.findings.push_back({K::DanglingTarget, where + ": target " + r.target->color.str() + " not in palette"});
    } else if (palette[*idx].name != r.target->name) {
      report.findings.push_back({K::NameMismatch, where + ": target named '" + r.target->name + "' but palette has '" +
                                                      palette[*idx].name + "' at " + r.target->color.str()});
    }
  }
  // Categories named in the palette scope need at least one row.
  std::set<std::string> scoped;
  for (const auto& e : palette.entries()) scoped.insert(e.scope.begin(), e.scope.end());
  for (const auto& c : scoped) {
    if (!table.has_category(c)) report.findings.push_back({K::EmptyCategory, "category " + c + " has no rows"});
  }
  return report;
}

}  // namespace sfseg
