#include "sfseg/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace sfseg {

ClassWeights ClassWeights::uniform(std::size_t classes, double w) { return {std::vector<double>(classes, w)}; }

ClassWeights ClassWeights::ignore_background(std::size_t classes) {
  auto cw = uniform(classes, 1.0);
  if (!cw.weight.empty()) cw.weight[Palette::kBackground] = 0.0;
  return cw;
}

void ClassWeights::validate(std::size_t classes) const {
  if (weight.size() != classes) {
    throw ParameterError("class weights: " + std::to_string(weight.size()) + " entries for " +
                         std::to_string(classes) + " classes");
  }
  bool any = false;
  for (double w : weight) {
    if (!std::isfinite(w) || w < 0.0) throw ParameterError("class weights must be finite and non-negative");
    any = any || w > 0.0;
  }
  if (!any) throw ParameterError("class weights: at least one weight must be positive");
}

namespace {

template <typename T>
void check_targets(const Tensor<T>& logits, const std::vector<LabelMap>& target) {
  if (logits.rank() != 4) throw DimensionError("loss: logits must be [N,C,H,W], got " + shape_str(logits.shape()));
  if (static_cast<std::int64_t>(target.size()) != logits.dim(0)) {
    throw DimensionError("loss: " + std::to_string(target.size()) + " label maps for batch " +
                         std::to_string(logits.dim(0)));
  }
  const auto c = logits.dim(1);
  for (const auto& t : target) {
    if (t.height != logits.dim(2) || t.width != logits.dim(3)) {
      throw DimensionError("loss: label map " + std::to_string(t.width) + "x" + std::to_string(t.height) +
                           " does not match logits " + shape_str(logits.shape()));
    }
    for (auto k : t.labels) {
      if (k >= c) throw DataError("loss: label " + std::to_string(k) + " outside [0, " + std::to_string(c) + ")");
    }
  }
}

// -x[k] + logsumexp(x) at one pixel, with the max shift; plane stride `hw`.
template <typename T>
double pixel_loss(const T* x, std::int64_t c, std::int64_t hw, ClassIndex k) {
  double m = static_cast<double>(x[0]);
  for (std::int64_t j = 1; j < c; ++j) m = std::max(m, static_cast<double>(x[j * hw]));
  double s = 0.0;
  for (std::int64_t j = 0; j < c; ++j) s += std::exp(static_cast<double>(x[j * hw]) - m);
  return m + std::log(s) - static_cast<double>(x[k * hw]);
}

template <typename T>
Tensor<T> weighted_ce(const Tensor<T>& logits, const std::vector<LabelMap>& target, const std::vector<double>& w,
                      Reduction reduction, Tape<T>* tape) {
  check_targets(logits, target);
  const auto n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  const T* x = logits.data().data();
  double acc = 0.0;
  std::int64_t active = 0;
  for (std::int64_t b = 0; b < n; ++b) {
    const auto& lab = target[static_cast<std::size_t>(b)].labels;
    for (std::int64_t p = 0; p < hw; ++p) {
      const auto k = lab[static_cast<std::size_t>(p)];
      const double wk = w[k];
      if (wk == 0.0) continue;
      acc += wk * pixel_loss(x + b * c * hw + p, c, hw, k);
      ++active;
    }
  }
  const double denom = reduction == Reduction::Mean ? static_cast<double>(std::max<std::int64_t>(active, 1)) : 1.0;
  Tensor<T> loss({1}, static_cast<T>(acc / denom));
  check_finite<T>(loss.data(), "cross_entropy");

  if (needs_grad(tape, {&logits})) {
    loss.set_requires_grad(true);
    tape->record([logits, loss, target, w, denom, n, c, hw]() {
      if (!loss.has_grad()) return;
      const double g = static_cast<double>(loss.grad()[0]) / denom;
      const T* x = logits.data().data();
      T* dx = logits.grad_buffer().data();
      std::vector<double> e(static_cast<std::size_t>(c));
      for (std::int64_t b = 0; b < n; ++b) {
        const auto& lab = target[static_cast<std::size_t>(b)].labels;
        for (std::int64_t p = 0; p < hw; ++p) {
          const auto k = lab[static_cast<std::size_t>(p)];
          if (w[k] == 0.0) continue;
          const T* xp = x + b * c * hw + p;
          double m = static_cast<double>(xp[0]);
          for (std::int64_t j = 1; j < c; ++j) m = std::max(m, static_cast<double>(xp[j * hw]));
          double s = 0.0;
          for (std::int64_t j = 0; j < c; ++j) s += e[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(xp[j * hw]) - m);
          const double scale = g * w[k];
          T* dp = dx + b * c * hw + p;
          for (std::int64_t j = 0; j < c; ++j) {
            const double soft = e[static_cast<std::size_t>(j)] / s;
            dp[j * hw] += static_cast<T>(scale * (soft - (j == k ? 1.0 : 0.0)));
          }
        }
      }
    });
  }
  return loss;
}

}  // namespace

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<LabelMap>& target, Reduction reduction,
                        Tape<T>* tape) {
  if (logits.rank() != 4) throw DimensionError("cross_entropy: logits must be [N,C,H,W]");
  return weighted_ce(logits, target, std::vector<double>(static_cast<std::size_t>(logits.dim(1)), 1.0), reduction,
                     tape);
}

template <typename T>
Tensor<T> reweighted_cross_entropy(const Tensor<T>& logits, const std::vector<LabelMap>& target,
                                   const ClassWeights& weights, Reduction reduction, Tape<T>* tape) {
  if (logits.rank() != 4) throw DimensionError("reweighted_cross_entropy: logits must be [N,C,H,W]");
  weights.validate(static_cast<std::size_t>(logits.dim(1)));
  return weighted_ce(logits, target, weights.weight, reduction, tape);
}

template Tensor<float> cross_entropy<float>(const Tensor<float>&, const std::vector<LabelMap>&, Reduction,
                                            Tape<float>*);
template Tensor<double> cross_entropy<double>(const Tensor<double>&, const std::vector<LabelMap>&, Reduction,
                                              Tape<double>*);
template Tensor<float> reweighted_cross_entropy<float>(const Tensor<float>&, const std::vector<LabelMap>&,
                                                       const ClassWeights&, Reduction, Tape<float>*);
template Tensor<double> reweighted_cross_entropy<double>(const Tensor<double>&, const std::vector<LabelMap>&,
                                                         const ClassWeights&, Reduction, Tape<double>*);

// Metrics

MetricCounts& MetricCounts::operator+=(const MetricCounts& o) {
  correct_pixels += o.correct_pixels;
  stroke_pixels += o.stroke_pixels;
  correct_components += o.correct_components;
  components += o.components;
  return *this;
}

namespace {

bool component_correct(std::uint64_t correct, std::uint64_t size) { return 4 * correct >= 3 * size; }

}  // namespace

MetricCounts count_metrics(const LabelMap& pred, const LabelMap& truth, ComponentMode mode) {
  if (pred.width != truth.width || pred.height != truth.height) {
    throw DataError("metric: prediction " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                    " vs truth " + std::to_string(truth.width) + "x" + std::to_string(truth.height));
  }
  if (pred.palette && truth.palette && pred.palette != truth.palette && !(*pred.palette == *truth.palette)) {
    throw DataError("metric: prediction and truth use different palettes");
  }
  MetricCounts out;
  const auto npx = truth.labels.size();
  for (std::size_t i = 0; i < npx; ++i) {
    if (truth.labels[i] == Palette::kBackground) continue;
    ++out.stroke_pixels;
    if (pred.labels[i] == truth.labels[i]) ++out.correct_pixels;
  }

  if (mode == ComponentMode::PerLabel) {
    std::vector<std::uint64_t> size(256, 0), correct(256, 0);
    for (std::size_t i = 0; i < npx; ++i) {
      const auto k = truth.labels[i];
      if (k == Palette::kBackground) continue;
      ++size[k];
      if (pred.labels[i] == k) ++correct[k];
    }
    for (std::size_t k = 0; k < 256; ++k) {
      if (size[k] == 0) continue;
      ++out.components;
      if (component_correct(correct[k], size[k])) ++out.correct_components;
    }
    return out;
  }

  // 8-connected flood fill over same-label stroke pixels.
  std::vector<bool> seen(npx, false);
  std::vector<std::size_t> stack;
  const int w = truth.width, h = truth.height;
  for (std::size_t start = 0; start < npx; ++start) {
    const auto k = truth.labels[start];
    if (k == Palette::kBackground || seen[start]) continue;
    std::uint64_t size = 0, correct = 0;
    stack.assign(1, start);
    seen[start] = true;
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      ++size;
      if (pred.labels[i] == k) ++correct;
      const int x = static_cast<int>(i % static_cast<std::size_t>(w)), y = static_cast<int>(i / static_cast<std::size_t>(w));
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const auto j = static_cast<std::size_t>(ny) * static_cast<std::size_t>(w) + static_cast<std::size_t>(nx);
          if (!seen[j] && truth.labels[j] == k) {
            seen[j] = true;
            stack.push_back(j);
          }
        }
      }
    }
    ++out.components;
    if (component_correct(correct, size)) ++out.correct_components;
  }
  return out;
}

double p_metric(const LabelMap& pred, const LabelMap& truth) {
  const auto c = count_metrics(pred, truth);
  if (c.stroke_pixels == 0) throw UndefinedMetricError("P-metric undefined: truth has no stroke pixels");
  return static_cast<double>(c.correct_pixels) / static_cast<double>(c.stroke_pixels);
}

double c_metric(const LabelMap& pred, const LabelMap& truth, ComponentMode mode) {
  const auto c = count_metrics(pred, truth, mode);
  if (c.components == 0) throw UndefinedMetricError("C-metric undefined: truth has no stroke pixels");
  return static_cast<double>(c.correct_components) / static_cast<double>(c.components);
}

double CategoryResult::p() const {
  if (counts.stroke_pixels == 0) throw UndefinedMetricError("P-metric undefined for " + name + ": no stroke pixels");
  return static_cast<double>(counts.correct_pixels) / static_cast<double>(counts.stroke_pixels);
}

double CategoryResult::c() const {
  if (counts.components == 0) throw UndefinedMetricError("C-metric undefined for " + name + ": no components");
  return static_cast<double>(counts.correct_components) / static_cast<double>(counts.components);
}

void EvalReport::add(const std::string& category, const MetricCounts& counts) {
  auto it = std::find_if(categories.begin(), categories.end(),
                         [&](const CategoryResult& r) { return r.name == category; });
  if (it == categories.end()) {
    categories.push_back({category, 0, {}});
    it = categories.end() - 1;
  }
  it->counts += counts;
  ++it->sketches;
}

const CategoryResult* EvalReport::find(const std::string& category) const {
  for (const auto& r : categories) {
    if (r.name == category) return &r;
  }
  return nullptr;
}

double EvalReport::average_p() const {
  if (categories.empty()) throw UndefinedMetricError("empty evaluation report");
  double s = 0.0;
  for (const auto& r : categories) s += r.p();
  return s / static_cast<double>(categories.size());
}

double EvalReport::average_c() const {
  if (categories.empty()) throw UndefinedMetricError("empty evaluation report");
  double s = 0.0;
  for (const auto& r : categories) s += r.c();
  return s / static_cast<double>(categories.size());
}

std::string EvalReport::table() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %8s %8s %10s %10s %8s\n", "category", "P", "C", "pixels", "components",
                "sketches");
  out += line;
  for (const auto& r : categories) {
    std::snprintf(line, sizeof line, "%-14s %8.4f %8.4f %10llu %10llu %8zu\n", r.name.c_str(), r.p(), r.c(),
                  static_cast<unsigned long long>(r.counts.stroke_pixels),
                  static_cast<unsigned long long>(r.counts.components), r.sketches);
    out += line;
  }
  if (!categories.empty()) {
    std::snprintf(line, sizeof line, "%-14s %8.4f %8.4f\n", "average", average_p(), average_c());
    out += line;
  }
  return out;
}

std::string EvalReport::json() const {
  nlohmann::ordered_json j;
  j["categories"] = nlohmann::ordered_json::array();
  for (const auto& r : categories) {
    j["categories"].push_back({{"name", r.name},
                               {"p_metric", r.p()},
                               {"c_metric", r.c()},
                               {"stroke_pixels", r.counts.stroke_pixels},
                               {"correct_pixels", r.counts.correct_pixels},
                               {"components", r.counts.components},
                               {"correct_components", r.counts.correct_components},
                               {"sketches", r.sketches}});
  }
  if (!categories.empty()) {
    j["average"] = {{"p_metric", average_p()}, {"c_metric", average_c()}};
  }
  return j.dump(2);
}

void EvalReport::write_json(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << json() << '\n';
}

}  // namespace sfseg
