#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "segforge/model.hpp"

SEGFORGE_NAMESPACE_BEGIN

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Checkpoint layout, little-endian throughout:
///
///   "SFCK"  u32 version  u32 json_len  json[json_len]  u32 record_count
///   record: u16 name_len  name  u8 dtype (0 f32, 1 f64)  u8 rank  u32 dims[rank]  values
///
/// The JSON blob is {"meta": {...}, "model": <ModelConfig>}. Records are the
/// parameters in registry order followed by the batch-norm running statistics.
struct Checkpoint {
  Model model;
  /// Free-form numeric annotations (e.g. epoch, val_dice) stored with the weights.
  std::map<std::string, double> meta;
};

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::map<std::string, double>& meta = {});

/// Throws CheckpointError with a kind per failure class.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Serialized bytes, as written by save_checkpoint.
std::string checkpoint_bytes(const Model& model, const std::map<std::string, double>& meta = {});
Checkpoint parse_checkpoint(const std::string& bytes);

SEGFORGE_NAMESPACE_END
