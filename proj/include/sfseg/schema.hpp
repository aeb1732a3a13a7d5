#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sfseg/image.hpp"
#include "sfseg/labels.hpp"

namespace sfseg {

/// Mapping of per-category source part colors onto the unified palette.
///
/// Text format (see data/schema/huang_remap.csv): one comma-separated record
/// per line, `category, source name, R, G, B, target name, R, G, B`, or
/// `category, source name, R, G, B, ignore` for parts that are dropped.
/// Blank lines and lines starting with '#' are skipped.
class RemapTable {
 public:
  struct Target {
    std::string name;
    Rgb color;
  };
  struct Row {
    std::string category;
    std::string source_name;
    Rgb source;
    std::optional<Target> target;  // nullopt = ignore (maps to background)
  };

  RemapTable() = default;
  explicit RemapTable(std::vector<Row> rows) : rows_(std::move(rows)) {}

  static RemapTable parse(std::string_view text);
  static RemapTable load(const std::string& path);

  const std::vector<Row>& rows() const { return rows_; }
  std::vector<std::string> categories() const;
  bool has_category(std::string_view category) const;
  const Row* find(std::string_view category, Rgb source) const;

  // Background plus the category's source parts, in table order.
  std::shared_ptr<const Palette> source_palette(std::string_view category) const;

 private:
  std::vector<Row> rows_;
};

/// The transcription of the Huang-dataset configuration shipped with the library.
const RemapTable& builtin_remap_table();

/// Re-expresses a label map drawn in a category's source palette in `unified`.
/// Ignored parts become background. A map already in `unified` is returned
/// unchanged.
LabelMap remap(const LabelMap& labels, std::string_view category, const RemapTable& table,
               const std::shared_ptr<const Palette>& unified);

/// Raster form: background stays background, every other color must appear
/// in the category's rows. Throws UnmappedLabelError listing all unknown colors.
RgbImage remap_raster(const RgbImage& raster, std::string_view category, const RemapTable& table);

struct SchemaFinding {
  enum class Kind { Duplicate, DanglingTarget, NameMismatch, EmptyCategory };
  Kind kind;
  std::string message;
};

struct SchemaReport {
  std::vector<SchemaFinding> findings;
  bool ok() const { return findings.empty(); }
  std::size_t count(SchemaFinding::Kind kind) const;
};

SchemaReport validate(const RemapTable& table, const Palette& palette);

}  // namespace sfseg
