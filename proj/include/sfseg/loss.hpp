#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfseg/labels.hpp"
#include "sfseg/tensor.hpp"

namespace sfseg {

enum class Reduction {
  Mean,  // over pixels with nonzero weight
  Sum,
};

struct ClassWeights {
  std::vector<double> weight;

  static ClassWeights uniform(std::size_t classes, double w = 1.0);
  // Background 0, every part 1.
  static ClassWeights ignore_background(std::size_t classes);

  // Throws ParameterError unless the weights fit `classes` and are usable.
  void validate(std::size_t classes) const;
};

/// Mean softmax cross-entropy over every pixel of the batch.
/// `logits` is [N,C,H,W]; `target` holds N label maps of size HxW.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<LabelMap>& target,
                        Reduction reduction = Reduction::Mean, Tape<T>* tape = nullptr);

/// Per-pixel cross-entropy scaled by the weight of the target class.
/// Pixels of zero weight are skipped outright: no value, no gradient.
template <typename T>
Tensor<T> reweighted_cross_entropy(const Tensor<T>& logits, const std::vector<LabelMap>& target,
                                   const ClassWeights& weights, Reduction reduction = Reduction::Mean,
                                   Tape<T>* tape = nullptr);

enum class ComponentMode {
  PerLabel,   // all stroke pixels of one part label in one sketch
  Connected,  // 8-connected runs of one part label
};

struct MetricCounts {
  std::uint64_t correct_pixels = 0;
  std::uint64_t stroke_pixels = 0;
  std::uint64_t correct_components = 0;
  std::uint64_t components = 0;

  MetricCounts& operator+=(const MetricCounts& o);
  bool operator==(const MetricCounts&) const = default;
};

// A component counts as correct when at least this share of its pixels is.
inline constexpr double kComponentThreshold = 0.75;

/// Counts over ground-truth stroke pixels (non-background).
/// Throws DataError on shape or palette mismatch.
MetricCounts count_metrics(const LabelMap& pred, const LabelMap& truth,
                           ComponentMode mode = ComponentMode::PerLabel);

// Throw UndefinedMetricError when truth has no stroke pixels.
double p_metric(const LabelMap& pred, const LabelMap& truth);
double c_metric(const LabelMap& pred, const LabelMap& truth, ComponentMode mode = ComponentMode::PerLabel);

struct CategoryResult {
  std::string name;
  std::size_t sketches = 0;
  MetricCounts counts;

  double p() const;
  double c() const;
};

/// Counts pooled per category; averages are plain means over categories.
struct EvalReport {
  std::vector<CategoryResult> categories;  // in first-seen order

  void add(const std::string& category, const MetricCounts& counts);
  const CategoryResult* find(const std::string& category) const;
  double average_p() const;
  double average_c() const;

  std::string table() const;
  std::string json() const;
  void write_json(const std::filesystem::path& path) const;
};

}  // namespace sfseg
