#include "sfseg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "sfseg/random.hpp"

namespace sfseg {

namespace fs = std::filesystem;

// Datasets

std::vector<ManifestRecord> read_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest.csv");
  if (!in) throw IoError("cannot open " + (root / "manifest.csv").string());
  std::vector<ManifestRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line.rfind("id,", 0) == 0)) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (line.back() == ',') f.emplace_back();
    if (f.size() < 4 || f.size() > 5) {
      throw DataError("manifest line " + std::to_string(line_no) + ": expected 4 or 5 fields");
    }
    out.push_back({f[0], f[1], f[2], f[3], f.size() == 5 ? f[4] : ""});
  }
  std::set<std::string> ids;
  for (const auto& r : out) {
    if (!ids.insert(r.id).second) throw DataError("manifest lists id '" + r.id + "' twice");
    for (const auto& p : {r.sketch, r.labels}) {
      if (!fs::exists(root / p)) throw DataError("manifest references missing file " + (root / p).string());
    }
  }
  return out;
}

void write_manifest(const fs::path& root, const std::vector<ManifestRecord>& records) {
  fs::create_directories(root);
  std::ofstream out(root / "manifest.csv");
  if (!out) throw IoError("cannot write " + (root / "manifest.csv").string());
  out << "id,category,sketch,labels,split\n";
  for (const auto& r : records) out << r.id << ',' << r.category << ',' << r.sketch << ',' << r.labels << ',' << r.split << '\n';
}

std::vector<ManifestRecord> scan_layout(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<ManifestRecord> out;
  for (const auto& cat : fs::directory_iterator(root)) {
    if (!cat.is_directory() || !fs::is_directory(cat.path() / "sketches")) continue;
    const auto category = cat.path().filename().string();
    for (const auto& f : fs::directory_iterator(cat.path() / "sketches")) {
      if (f.path().extension() != ".png") continue;
      const auto id = f.path().stem().string();
      out.push_back({id, category, category + "/sketches/" + id + ".png", category + "/labels/" + id + ".png", ""});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].id == out[i - 1].id) throw DataError("sketch id '" + out[i].id + "' appears in two categories");
  }
  return out;
}

namespace {

std::vector<ManifestRecord> records_for(const fs::path& root) {
  return fs::exists(root / "manifest.csv") ? read_manifest(root) : scan_layout(root);
}

LabelMap exact_labels(const RgbImage& raster, const std::shared_ptr<const Palette>& palette, const std::string& where) {
  LabelMap lm(raster.width, raster.height, palette);
  std::set<Rgb> unknown;
  for (std::size_t i = 0; i < raster.pixels.size(); ++i) {
    const auto k = palette->find(raster.pixels[i]);
    if (k) {
      lm.labels[i] = *k;
    } else {
      unknown.insert(raster.pixels[i]);
    }
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& c : unknown) list += (list.empty() ? "" : ", ") + c.str();
    throw UnmappedLabelError(where + ": colors not in the palette: " + list);
  }
  return lm;
}

}  // namespace

Dataset load_dataset(const fs::path& root, std::shared_ptr<const Palette> palette) {
  Dataset data;
  data.palette = palette ? palette : builtin_palette();
  for (const auto& r : records_for(root)) {
    Sample s{r.id, r.category, read_png(root / r.sketch), {}, std::nullopt, std::nullopt};
    const auto raster = read_png(root / r.labels);
    if (raster.width != s.sketch.width || raster.height != s.sketch.height) {
      throw DataError(r.id + ": sketch and label rasters differ in size");
    }
    s.labels = exact_labels(raster, data.palette, (root / r.labels).string());
    data.samples.push_back(std::move(s));
  }
  if (data.samples.empty()) throw DataError("no samples under " + root.string());
  return data;
}

std::uint64_t sketch_seed(std::uint64_t seed, const std::string& id, std::uint64_t epoch) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : id) h = (h ^ c) * 1099511628211ULL;
  return Rng::derive(Rng::derive(seed, h), epoch);
}

Dataset load_raw_dataset(const fs::path& root, const PrepConfig& prep, std::shared_ptr<const Palette> palette) {
  Dataset data;
  data.palette = palette ? palette : builtin_palette();
  for (const auto& r : records_for(root)) {
    auto sketch = read_png(root / r.sketch);
    auto labels = read_png(root / r.labels);
    PrepConfig cfg = prep;
    cfg.seed = sketch_seed(prep.seed, r.id);
    auto norm = normalize(sketch, &labels, cfg, data.palette);
    data.samples.push_back({r.id, r.category, std::move(norm.sketch), std::move(*norm.labels), std::move(sketch),
                            std::move(labels)});
  }
  if (data.samples.empty()) throw DataError("no samples under " + root.string());
  return data;
}

// Schedule and split

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0", "must be finite and non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum", "must be in [0, 1)");
  if (!(decay_power >= 0.0) || !std::isfinite(decay_power)) throw ConfigError("decay_power", "must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size", "must be at least 1");
  if (epochs < 0) throw ConfigError("epochs", "must not be negative");
  if (!(split > 0.0 && split < 1.0)) throw ConfigError("split", "must be strictly between 0 and 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every", "must not be negative");
  if (augment) prep.validate();
}

double poly_lr(double lr0, int step, int max_steps, double power) {
  if (max_steps < 1) throw ScheduleError("poly_lr: max_steps must be at least 1");
  if (step < 0 || step > max_steps) {
    throw ScheduleError("poly_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(max_steps) + "]");
  }
  return lr0 * std::pow(1.0 - static_cast<double>(step) / max_steps, power);
}

namespace {

template <typename V>
void shuffle(std::vector<V>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

Split split_dataset(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split", "must be strictly between 0 and 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return data.samples[a].id < data.samples[b].id; });
  Rng rng(Rng::derive(seed, 0x5b17));
  shuffle(order, rng);
  auto n_train = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(order.size())));
  if (order.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, order.size() - 1);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, order.size())));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(s.train.size()), order.end());
  return s;
}

std::string TrainLog::csv(bool with_time) const {
  std::string out = with_time ? "epoch,loss,lr,train_p_metric,seconds\n" : "epoch,loss,lr,train_p_metric\n";
  char line[160];
  for (const auto& e : epochs) {
    if (with_time) {
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.3f\n", e.epoch, e.loss, e.lr, e.train_p, e.seconds);
    } else {
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.loss, e.lr, e.train_p);
    }
    out += line;
  }
  return out;
}

void TrainLog::write_csv(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << csv();
}

// Batching

namespace {

std::vector<std::size_t> all_indices(const Dataset& data, std::span<const std::size_t> indices) {
  if (!indices.empty()) return {indices.begin(), indices.end()};
  std::vector<std::size_t> out(data.size());
  std::iota(out.begin(), out.end(), 0);
  return out;
}

template <typename T>
Tensor<T> encode(const std::vector<const RgbImage*>& images) {
  const int w = images.front()->width, h = images.front()->height;
  Tensor<T> x({static_cast<std::int64_t>(images.size()), 3, h, w});
  auto d = x.data();
  const auto plane = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b]->width != w || images[b]->height != h) throw DimensionError("batch sketches differ in size");
    for (std::size_t p = 0; p < plane; ++p) {
      const Rgb px = images[b]->pixels[p];
      d[(b * 3 + 0) * plane + p] = static_cast<T>(255 - px.r) / T(255);
      d[(b * 3 + 1) * plane + p] = static_cast<T>(255 - px.g) / T(255);
      d[(b * 3 + 2) * plane + p] = static_cast<T>(255 - px.b) / T(255);
    }
  }
  return x;
}

}  // namespace

template <typename T>
Tensor<T> sketch_batch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DimensionError("sketch_batch: no samples selected");
  std::vector<const RgbImage*> imgs;
  for (auto i : indices) imgs.push_back(&data.samples.at(i).sketch);
  return encode<T>(imgs);
}

template <typename T>
std::vector<LabelMap> predict(Model<T>& model, const Dataset& data, std::span<const std::size_t> indices,
                              int batch_size) {
  const auto idx = all_indices(data, indices);
  if (batch_size < 1) throw ParameterError("predict: batch_size must be at least 1");
  std::vector<LabelMap> out;
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
    const std::span<const std::size_t> chunk(idx.data() + start, end - start);
    auto scores = forward(model, sketch_batch<T>(data, chunk), Mode::Eval);
    for (auto& lm : predict_labels(scores, data.palette)) out.push_back(std::move(lm));
  }
  return out;
}

EvalReport evaluate_predictions(const std::vector<LabelMap>& predictions, const Dataset& data,
                                std::span<const std::size_t> indices, ComponentMode mode) {
  const auto idx = all_indices(data, indices);
  if (idx.empty()) throw DataError("evaluate: empty dataset");
  if (predictions.size() != idx.size()) throw DataError("evaluate: prediction count differs from sample count");
  EvalReport report;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = data.samples.at(idx[i]);
    report.add(s.category, count_metrics(predictions[i], s.labels, mode));
  }
  return report;
}

template <typename T>
EvalReport evaluate(Model<T>& model, const Dataset& data, std::span<const std::size_t> indices, ComponentMode mode) {
  if (data.size() == 0) throw DataError("evaluate: empty dataset");
  if (data.palette->size() < static_cast<std::size_t>(model.config.class_count)) {
    throw DataError("evaluate: model predicts " + std::to_string(model.config.class_count) +
                    " classes but the dataset palette has " + std::to_string(data.palette->size()));
  }
  return evaluate_predictions(predict(model, data, indices), data, indices, mode);
}

// Training

template <typename T>
TrainLog train(Model<T>& model, const Dataset& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (data.size() == 0) throw DataError("train: empty dataset");
  const auto classes = static_cast<std::size_t>(model.config.class_count);
  const ClassWeights weights = cfg.class_weights.weight.empty() ? ClassWeights::ignore_background(classes)
                                                                : cfg.class_weights;
  try {
    weights.validate(classes);
  } catch (const ParameterError& e) {
    throw ConfigError("class_weights", e.what());
  }
  for (const auto& s : data.samples) {
    if (s.sketch.width != model.config.canvas_width || s.sketch.height != model.config.canvas_height) {
      throw DataError(s.id + ": sketch is " + std::to_string(s.sketch.width) + "x" + std::to_string(s.sketch.height) +
                      ", model canvas is " + std::to_string(model.config.canvas_width) + "x" +
                      std::to_string(model.config.canvas_height));
    }
    for (auto k : s.labels.labels) {
      if (k >= classes) {
        throw DataError(s.id + ": label " + std::to_string(k) + " outside the model's " + std::to_string(classes) +
                        " classes");
      }
    }
    if (cfg.augment && !(s.raw_sketch && s.raw_labels)) {
      throw ConfigError("augment", "needs raw rasters; load the dataset with load_raw_dataset");
    }
  }

  Dataset work = data;
  const Split split = split_dataset(work, cfg.split, cfg.seed);
  auto params = model.parameters();
  std::vector<Tensor<T>> velocities;
  TrainLog log;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = poly_lr(cfg.lr0, epoch, cfg.epochs, cfg.decay_power);
    if (cfg.augment && epoch > 0) {
      for (auto i : split.train) {
        auto& s = work.samples[i];
        PrepConfig p = cfg.prep;
        p.seed = sketch_seed(cfg.prep.seed, s.id, static_cast<std::uint64_t>(epoch));
        auto norm = normalize(*s.raw_sketch, &*s.raw_labels, p, work.palette);
        s.sketch = std::move(norm.sketch);
        s.labels = std::move(*norm.labels);
      }
    }
    auto order = split.train;
    Rng rng(Rng::derive(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    shuffle(order, rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> chunk(order.data() + start, end - start);
      std::vector<LabelMap> targets;
      for (auto i : chunk) targets.push_back(work.samples[i].labels);

      Tape<T> tape;
      auto scores = forward(model, sketch_batch<T>(work, chunk), Mode::Train, &tape);
      auto loss = reweighted_cross_entropy(scores, targets, weights, Reduction::Mean, &tape);
      tape.backward(loss);
      for (auto& p : params) {
        if (!p.has_grad()) p.grad_buffer();
      }
      sgd_momentum_step<T>(params, velocities, static_cast<T>(lr), static_cast<T>(cfg.momentum));
      for (auto& p : params) p.zero_grad();
      loss_sum += static_cast<double>(loss.data()[0]) * static_cast<double>(chunk.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
    rec.lr = lr;
    rec.train_p = evaluate(model, work, split.train).average_p();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.out_dir && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_epoch_%04d.sfsg", epoch + 1);
      save_checkpoint(model, *hooks.out_dir / name);
    }
  }
  if (hooks.out_dir) save_checkpoint(model, *hooks.out_dir / "model.sfsg");
  return log;
}

#define SFSEG_INSTANTIATE_TRAIN(T)                                                                              \
  template Tensor<T> sketch_batch<T>(const Dataset&, std::span<const std::size_t>);                             \
  template std::vector<LabelMap> predict<T>(Model<T>&, const Dataset&, std::span<const std::size_t>, int);      \
  template EvalReport evaluate<T>(Model<T>&, const Dataset&, std::span<const std::size_t>, ComponentMode);      \
  template TrainLog train<T>(Model<T>&, const Dataset&, const TrainConfig&, const TrainHooks&);

SFSEG_INSTANTIATE_TRAIN(float)
SFSEG_INSTANTIATE_TRAIN(double)

}  // namespace sfseg
