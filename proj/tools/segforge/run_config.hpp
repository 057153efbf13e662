#pragma once

#include <cstdint>
#include <string>

#include "segforge/augment.hpp"
#include "segforge/data.hpp"
#include "segforge/model.hpp"
#include "segforge/train.hpp"

namespace segforge::cli {

/// Everything a training run depends on. One root seed feeds model
/// initialization, the synthetic generator, the split and the batch shuffle.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  AugmentationSpec augment = AugmentationSpec::all_enabled();
  SplitSpec split;
  std::uint64_t seed = 0;
  std::string data_dir;          // empty: synthetic data
  std::size_t synth_count = 0;   // samples to generate when data_dir is empty
  std::size_t synth_size = 256;  // side length of generated images
  std::string out_dir = "run";

  /// Copies the root seed into the sub-configurations.
  void propagate_seed();
  void validate() const;

  /// Pretty-printed JSON with every field, keys sorted.
  std::string to_json() const;
  /// Strict: unknown keys and mistyped values are ConfigErrors; absent keys
  /// keep their current values, so a file can be layered over defaults.
  void merge_json(const std::string& text);
};

RunConfig load_run_config(const std::string& path);

int cmd_train(const RunConfig& config);

}  // namespace segforge::cli
