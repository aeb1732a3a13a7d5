#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfseg/image.hpp"
#include "sfseg/loss.hpp"
#include "sfseg/prep.hpp"
#include "sfseg/segnet.hpp"

namespace sfseg {

struct Sample {
  std::string id;
  std::string category;
  RgbImage sketch;  // normalized
  LabelMap labels;
  // Kept when loaded from raw rasters, for per-epoch re-normalization.
  std::optional<RgbImage> raw_sketch;
  std::optional<RgbImage> raw_labels;
};

struct Dataset {
  std::vector<Sample> samples;
  std::shared_ptr<const Palette> palette = builtin_palette();

  std::size_t size() const { return samples.size(); }
};

/// One line of manifest.csv: id,category,sketch,labels,split (paths relative
/// to the dataset root, split may be empty).
struct ManifestRecord {
  std::string id;
  std::string category;
  std::string sketch;
  std::string labels;
  std::string split;
};

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& root, const std::vector<ManifestRecord>& records);

// <root>/<Category>/sketches/<id>.png with labels/<id>.png, sorted by id.
std::vector<ManifestRecord> scan_layout(const std::filesystem::path& root);

/// Loads preprocessed pairs, from manifest.csv when present. Label rasters
/// must use exact palette colors.
Dataset load_dataset(const std::filesystem::path& root, std::shared_ptr<const Palette> palette = builtin_palette());

/// Loads raw pairs and normalizes each with a seed derived from (prep.seed, id).
Dataset load_raw_dataset(const std::filesystem::path& root, const PrepConfig& prep,
                         std::shared_ptr<const Palette> palette = builtin_palette());

// Seed used to normalize one sketch.
std::uint64_t sketch_seed(std::uint64_t seed, const std::string& id, std::uint64_t epoch = 0);

struct TrainConfig {
  double lr0 = 0.001;
  double momentum = 0.9;
  double decay_power = 0.9;
  int batch_size = 5;
  int epochs = 50;
  double split = 0.75;
  std::uint64_t seed = 0;
  // Empty: background 0, parts 1.
  ClassWeights class_weights;
  // Write checkpoint_epoch_<n>.sfsg every n epochs; 0 disables.
  int checkpoint_every = 0;
  // Redraw the random resize every epoch (needs raw rasters).
  bool augment = false;
  PrepConfig prep;

  void validate() const;
};

/// lr0 * (1 - step / max_steps)^power
double poly_lr(double lr0, int step, int max_steps, double power);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of the samples sorted by id; the first round(fraction * n)
/// go to training.
Split split_dataset(const Dataset& data, double fraction, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double train_p = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  // Header epoch,loss,lr,train_p_metric[,seconds]; doubles at full precision.
  std::string csv(bool with_time = true) const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainHooks {
  std::optional<std::filesystem::path> out_dir;  // checkpoints go here
  std::function<void(const EpochRecord&)> on_epoch;
};

// Input encoding: (255 - v) / 255 per channel, so blank canvas is zero.
template <typename T>
Tensor<T> sketch_batch(const Dataset& data, std::span<const std::size_t> indices);

/// Runs cfg.epochs epochs of SGD with momentum on the training split.
/// Throws DataError before any step if a label is outside the model's classes.
template <typename T>
TrainLog train(Model<T>& model, const Dataset& data, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Eval-mode forward and argmax over `indices` (all samples when empty).
template <typename T>
std::vector<LabelMap> predict(Model<T>& model, const Dataset& data, std::span<const std::size_t> indices = {},
                              int batch_size = 5);

EvalReport evaluate_predictions(const std::vector<LabelMap>& predictions, const Dataset& data,
                                std::span<const std::size_t> indices = {},
                                ComponentMode mode = ComponentMode::PerLabel);

template <typename T>
EvalReport evaluate(Model<T>& model, const Dataset& data, std::span<const std::size_t> indices = {},
                    ComponentMode mode = ComponentMode::PerLabel);

}  // namespace sfseg
