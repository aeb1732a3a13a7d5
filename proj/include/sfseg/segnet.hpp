#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sfseg/affine.hpp"
#include "sfseg/labels.hpp"
#include "sfseg/layers.hpp"

namespace sfseg {

enum class Precision { F32, F64 };

// Where an enabled ATE warps its stage's features.
enum class AtePlacement {
  ScoreBranch,  // only the score head sees the warped map
  Trunk,        // the warped map also feeds the next stage
};

struct ModelConfig {
  int class_count = 25;
  int canvas_width = 800;
  int canvas_height = 800;
  // Rational multiplier on the ResNet34 widths 64/128/256/512.
  int width_num = 1;
  int width_den = 1;
  std::array<bool, 3> ate_enabled{true, true, true};
  AtePlacement ate_placement = AtePlacement::ScoreBranch;
  // 64-wide blocks, 128-wide blocks (stage 1), stage 2, stage 3.
  std::array<int, 4> blocks{3, 4, 6, 3};
  bool batchnorm = true;
  Precision precision = Precision::F32;

  // Throws ConfigError naming the offending field.
  void validate() const;
  std::int64_t channels(int base) const;

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
constexpr Precision precision_of() {
  return sizeof(T) == sizeof(double) ? Precision::F64 : Precision::F32;
}

template <typename T>
struct StageOutputs {
  Tensor<T> f1, f2, f3;  // features at 1/8, 1/16, 1/32
  Tensor<T> s1, s2, s3;  // C-channel scores at the same resolutions
  Tensor<T> scores;      // fused, full resolution
};

template <typename T>
struct Model {
  ModelConfig config;

  ConvLayer<T> stem;
  std::optional<BatchNormLayer<T>> stem_bn;
  std::vector<ResidualBlock<T>> stage1, stage2, stage3;
  std::array<std::optional<AteParams<T>>, 3> ates;
  std::array<ConvLayer<T>, 3> heads;

  void visit(const ParamVisitor<T>& fn);
  void visit_buffers(const BufferVisitor<T>& fn);
  std::vector<Tensor<T>> parameters();
  std::size_t parameter_count();
};

/// Deterministic in `seed`. Each component draws from its own derived stream,
/// so toggling ATEs leaves every other parameter unchanged.
template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed);

template <typename T>
StageOutputs<T> forward_stages(Model<T>& model, const Tensor<T>& batch, Mode mode = Mode::Eval,
                               Tape<T>* tape = nullptr);

/// Raw scores [N,C,H,W] for a batch [N,3,H,W] at the configured canvas.
template <typename T>
Tensor<T> forward(Model<T>& model, const Tensor<T>& batch, Mode mode = Mode::Eval, Tape<T>* tape = nullptr);

/// Per-pixel argmax over classes, ties to the lowest index.
template <typename T>
std::vector<LabelMap> predict_labels(const Tensor<T>& scores,
                                     std::shared_ptr<const Palette> palette = builtin_palette());

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary format: "SFSG", u32 version, ModelConfig, u32 record count, then per
/// record u32 name length, name, u32 rank, i64 dims, little-endian payload.
/// The payload is 32-bit for F32 models and 64-bit for F64 models.
template <typename T>
void save_checkpoint(Model<T>& model, const std::filesystem::path& path);

ModelConfig read_checkpoint_config(const std::filesystem::path& path);

/// Throws CheckpointError on a bad file, or naming the first config field
/// that differs from `expected` when given.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace sfseg
