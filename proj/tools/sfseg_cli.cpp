// Command-line front end: preprocess, train, eval, segment, remap, validate-schema.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>

#include "sfseg/config.hpp"
#include "sfseg/parallel.hpp"
#include "sfseg/schema.hpp"
#include "sfseg/train.hpp"

namespace fs = std::filesystem;
using namespace sfseg;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string config;
  bool desk = false;
  bool print_config = false;
};

RunConfig resolve_config(const Globals& g, const std::optional<fs::path>& sidecar = std::nullopt) {
  RunConfig base = g.desk ? desk_config() : RunConfig{};
  RunConfig c = base;
  if (!g.config.empty()) {
    c = load_config(g.config, base);
  } else if (sidecar && fs::exists(*sidecar)) {
    c = load_config(*sidecar, base);
  }
  if (g.seed) {
    c.set_seed(*g.seed);
    c.validate();
  }
  return c;
}

std::optional<fs::path> sidecar_for(const fs::path& checkpoint) { return checkpoint.parent_path() / "config.ini"; }

// Label colors further than `tolerance` (per channel) from every palette entry.
std::set<Rgb> foreign_colors(const RgbImage& raster, const Palette& palette, int tolerance) {
  std::set<Rgb> out;
  for (const auto& px : raster.pixels) {
    const Rgb near = palette[palette.nearest(px)].color;
    const int d = std::max({std::abs(px.r - near.r), std::abs(px.g - near.g), std::abs(px.b - near.b)});
    if (d > tolerance) out.insert(px);
  }
  return out;
}

std::string color_list(const std::set<Rgb>& colors) {
  std::string s;
  for (const auto& c : colors) s += (s.empty() ? "" : ", ") + c.str();
  return s;
}

int cmd_preprocess(const Globals& g, const fs::path& in_dir, const fs::path& out_dir) {
  const RunConfig cfg = resolve_config(g);
  const auto palette = builtin_palette();
  const auto records = fs::exists(in_dir / "manifest.csv") ? read_manifest(in_dir) : scan_layout(in_dir);
  std::vector<ManifestRecord> written;
  int failures = 0;
  for (const auto& r : records) {
    try {
      const auto sketch = read_png(in_dir / r.sketch);
      const auto labels = read_png(in_dir / r.labels);
      const auto foreign = foreign_colors(labels, *palette, cfg.prep.stroke_threshold);
      if (!foreign.empty()) throw UnmappedLabelError("label colors not in the palette: " + color_list(foreign));
      PrepConfig p = cfg.prep;
      p.seed = sketch_seed(cfg.prep.seed, r.id);
      const auto norm = normalize(sketch, &labels, p, palette);
      ManifestRecord out{r.id, r.category, r.category + "/sketches/" + r.id + ".png",
                         r.category + "/labels/" + r.id + ".png", ""};
      write_png(out_dir / out.sketch, norm.sketch);
      write_png(out_dir / out.labels, render(*norm.labels));
      written.push_back(out);
    } catch (const Error& e) {
      ++failures;
      std::cerr << "error: " << (in_dir / r.sketch).string() << ": " << e.what() << "\n";
    }
  }
  // Split tags follow the training split of the same seed.
  Dataset tags;
  for (const auto& w : written) tags.samples.push_back({w.id, w.category, {}, {}, std::nullopt, std::nullopt});
  if (tags.size() >= 2) {
    const auto split = split_dataset(tags, cfg.train.split, cfg.train.seed);
    for (auto i : split.train) written[i].split = "train";
    for (auto i : split.test) written[i].split = "test";
  }
  write_manifest(out_dir, written);
  std::printf("preprocessed %zu of %zu sketches, %d failed\n", written.size(), records.size(), failures);
  return failures == 0 ? 0 : 1;
}

template <typename T>
int train_as(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir, bool raw) {
  const auto data = raw ? load_raw_dataset(data_dir, cfg.prep) : load_dataset(data_dir);
  auto model = build_model<T>(cfg.model, cfg.train.seed);
  fs::create_directories(out_dir);
  {
    std::ofstream side(out_dir / "config.ini");
    side << to_ini(cfg);
  }
  TrainHooks hooks;
  hooks.out_dir = out_dir;
  hooks.on_epoch = [](const EpochRecord& r) {
    std::printf("epoch %d loss %.6f lr %.6g train_p %.4f (%.2fs)\n", r.epoch, r.loss, r.lr, r.train_p, r.seconds);
    std::fflush(stdout);
  };
  const auto log = train(model, data, cfg.train, hooks);
  log.write_csv(out_dir / "train_log.csv");
  std::printf("wrote %s\n", (out_dir / "model.sfsg").string().c_str());
  return 0;
}

int cmd_train(const Globals& g, const fs::path& data_dir, const fs::path& out_dir, std::optional<int> epochs,
              bool raw) {
  RunConfig cfg = resolve_config(g);
  if (epochs) {
    cfg.train.epochs = *epochs;
    cfg.validate();
  }
  if (cfg.model.precision == Precision::F64) return train_as<double>(cfg, data_dir, out_dir, raw);
  return train_as<float>(cfg, data_dir, out_dir, raw);
}

std::vector<std::size_t> select_split(const Dataset& data, const RunConfig& cfg, const std::string& which) {
  if (which == "all") return {};
  const auto split = split_dataset(data, cfg.train.split, cfg.train.seed);
  if (which == "train") return split.train;
  if (which == "test") return split.test;
  throw ConfigError("split", "expected train, test or all, got '" + which + "'");
}

template <typename T>
int eval_as(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir, const fs::path& report,
            const std::string& which, ComponentMode mode) {
  auto model = load_checkpoint<T>(checkpoint);
  const auto data = load_dataset(data_dir);
  const auto idx = select_split(data, cfg, which);
  const auto result = evaluate(model, data, idx, mode);
  fs::path json = report, text = report;
  if (report.extension() == ".json") {
    text.replace_extension(".txt");
  } else {
    json += ".json";
    text += ".txt";
  }
  result.write_json(json);
  std::ofstream(text) << result.table();
  std::cout << result.table();
  return 0;
}

int cmd_eval(const Globals& g, const fs::path& checkpoint, const fs::path& data_dir, const fs::path& report,
             const std::string& which, const std::string& components) {
  const RunConfig cfg = resolve_config(g, sidecar_for(checkpoint));
  ComponentMode mode = ComponentMode::PerLabel;
  if (components == "connected") {
    mode = ComponentMode::Connected;
  } else if (components != "label") {
    throw ConfigError("components", "expected label or connected");
  }
  const auto mc = read_checkpoint_config(checkpoint);
  if (mc.precision == Precision::F64) return eval_as<double>(cfg, checkpoint, data_dir, report, which, mode);
  return eval_as<float>(cfg, checkpoint, data_dir, report, which, mode);
}

template <typename T>
int segment_as(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& sketch_path, const fs::path& out) {
  auto model = load_checkpoint<T>(checkpoint);
  PrepConfig p = cfg.prep;
  if (p.canvas != model.config.canvas_width) {
    p.canvas = model.config.canvas_width;
    p.resize_max = p.canvas * 7 / 8;
  }
  p.resize_min = p.resize_max;
  const auto norm = normalize(read_png(sketch_path), nullptr, p);
  Dataset one;
  one.samples.push_back({"input", "", norm.sketch, {}, std::nullopt, std::nullopt});
  const auto pred = predict(model, one);
  write_png(out, render(pred.front()));
  return 0;
}

int cmd_segment(const Globals& g, const fs::path& checkpoint, const fs::path& sketch, const fs::path& out) {
  const RunConfig cfg = resolve_config(g, sidecar_for(checkpoint));
  const auto mc = read_checkpoint_config(checkpoint);
  if (mc.precision == Precision::F64) return segment_as<double>(cfg, checkpoint, sketch, out);
  return segment_as<float>(cfg, checkpoint, sketch, out);
}

RemapTable table_from(const std::string& path) {
  return path.empty() || path == "builtin" ? builtin_remap_table() : RemapTable::load(path);
}

int print_findings(const SchemaReport& report) {
  static const char* kinds[] = {"duplicate", "dangling-target", "name-mismatch", "empty-category"};
  for (const auto& f : report.findings) std::printf("%s: %s\n", kinds[static_cast<int>(f.kind)], f.message.c_str());
  return report.ok() ? 0 : 1;
}

int cmd_remap(const fs::path& in_dir, const std::string& category, const std::string& table_path,
              const fs::path& out_dir) {
  const auto table = table_from(table_path);
  const auto palette = builtin_palette();
  const auto findings = validate(table, *palette);
  if (!findings.ok()) {
    std::cerr << "error: remap table does not validate against the palette\n";
    print_findings(findings);
    return 1;
  }
  if (!table.has_category(category)) {
    std::cerr << "error: remap table has no category '" << category << "'\n";
    return 1;
  }
  std::vector<fs::path> files;
  for (const auto& f : fs::directory_iterator(in_dir)) {
    if (f.is_regular_file() && f.path().extension() == ".png") files.push_back(f.path());
  }
  std::sort(files.begin(), files.end());
  int failures = 0;
  for (const auto& f : files) {
    try {
      write_png(out_dir / f.filename(), remap_raster(read_png(f), category, table));
    } catch (const Error& e) {
      ++failures;
      std::cerr << "error: " << f.string() << ": " << e.what() << "\n";
    }
  }
  std::printf("remapped %zu of %zu rasters, %d failed\n", files.size() - static_cast<std::size_t>(failures),
              files.size(), failures);
  return failures == 0 ? 0 : 1;
}

int cmd_validate(const std::string& table_path, const std::string& palette_path) {
  const auto table = table_from(table_path);
  const Palette palette = palette_path.empty() ? *builtin_palette() : Palette::load(palette_path);
  const auto report = validate(table, palette);
  const int rc = print_findings(report);
  std::printf("%zu rows, %zu categories, %zu palette entries, %zu findings\n", table.rows().size(),
              table.categories().size(), palette.size(), report.findings.size());
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch part segmentation: preprocessing, training and evaluation"};
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for splits, initialization and resizing");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "INI config file")->check(CLI::ExistingFile);
  app.add_flag("--desk", g.desk, "Start from the 96x96 desk-scale defaults");
  app.add_flag("--print-config", g.print_config, "Print the resolved config and exit");

  fs::path in_dir, out_dir, data_dir, checkpoint, report, sketch, out_path;
  std::string category, table_path, palette_path, which = "all", components = "label";
  std::optional<int> epochs;
  bool raw = false;

  auto* pre = app.add_subcommand("preprocess", "Normalize raw sketch/label pairs");
  pre->add_option("in_dir", in_dir)->required()->check(CLI::ExistingDirectory);
  pre->add_option("out_dir", out_dir)->required();

  auto* tr = app.add_subcommand("train", "Train a model on preprocessed data");
  tr->add_option("data_dir", data_dir)->required()->check(CLI::ExistingDirectory);
  tr->add_option("out_dir", out_dir)->required();
  tr->add_option("--epochs", epochs, "Override train.epochs");
  tr->add_flag("--raw", raw, "data_dir holds raw rasters; normalize on load");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("checkpoint", checkpoint)->required();
  ev->add_option("data_dir", data_dir)->required()->check(CLI::ExistingDirectory);
  ev->add_option("report", report)->required();
  ev->add_option("--split", which, "train, test or all");
  ev->add_option("--components", components, "label or connected");

  auto* seg = app.add_subcommand("segment", "Label a single sketch");
  seg->add_option("checkpoint", checkpoint)->required();
  seg->add_option("sketch", sketch)->required()->check(CLI::ExistingFile);
  seg->add_option("out", out_path)->required();

  auto* rm = app.add_subcommand("remap", "Map source-palette label rasters onto the unified palette");
  rm->add_option("in_dir", in_dir)->required()->check(CLI::ExistingDirectory);
  rm->add_option("category", category)->required();
  rm->add_option("table", table_path, "Remap table file or 'builtin'")->required();
  rm->add_option("out_dir", out_dir)->required();

  auto* vs = app.add_subcommand("validate-schema", "Check a remap table against a palette");
  vs->add_option("--table", table_path, "Remap table file (default: built-in)");
  vs->add_option("--palette", palette_path, "Palette file (default: built-in)");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed;

  try {
    set_num_threads(g.threads);
    if (g.print_config) {
      std::cout << to_ini(resolve_config(g));
      return 0;
    }
    if (pre->parsed()) return cmd_preprocess(g, in_dir, out_dir);
    if (tr->parsed()) return cmd_train(g, data_dir, out_dir, epochs, raw);
    if (ev->parsed()) return cmd_eval(g, checkpoint, data_dir, report, which, components);
    if (seg->parsed()) return cmd_segment(g, checkpoint, sketch, out_path);
    if (rm->parsed()) return cmd_remap(in_dir, category, table_path, out_dir);
    if (vs->parsed()) return cmd_validate(table_path, palette_path);
    std::cerr << app.help();
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
