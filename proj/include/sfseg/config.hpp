#pragma once

#include <filesystem>
#include <string>

#include "sfseg/prep.hpp"
#include "sfseg/segnet.hpp"
#include "sfseg/train.hpp"

namespace sfseg {

/// Everything a run needs, read from an INI-style file:
///
///   [model]  class_count, canvas, width_multiplier (e.g. 1/8), ate (e.g. 1,1,1),
///            ate_placement (score_branch | trunk), blocks (e.g. 3,4,6,3),
///            batchnorm, precision (32 | 64)
///   [train]  lr0, momentum, decay_power, batch_size, epochs, split, seed,
///            class_weights (ignore_background | uniform | w0,w1,...),
///            checkpoint_every, augment
///   [prep]   canvas, resize_min, resize_max, background (R,G,B), seed,
///            stroke_threshold
///
/// Missing keys keep their defaults; unknown sections or keys are errors.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  PrepConfig prep;

  // Throws ConfigError naming the field, including cross-section checks.
  void validate() const;
  // Sets the training, split and preprocessing seeds together.
  void set_seed(std::uint64_t seed);
};

// 96x96 canvas, width 1/8, 300 epochs.
RunConfig desk_config();

RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// Round-trips through parse_config.
std::string to_ini(const RunConfig& config);

}  // namespace sfseg
