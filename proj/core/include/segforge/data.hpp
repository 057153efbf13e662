#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "segforge/tensor.hpp"

SEGFORGE_NAMESPACE_BEGIN

/// Image [3, H, W] in [0, 1] and binary mask [1, H, W].
struct Sample {
  Tensor image;
  Tensor mask;
  std::string id;
};

using Dataset = std::vector<Sample>;

/// Loads an 8-bit PNG image/mask pair. Gray images are replicated to three
/// channels; the mask is 1 where its luminance is >= 128. The id is the image
/// file stem.
Sample load_pair(const std::filesystem::path& image_path, const std::filesystem::path& mask_path);

/// Loads `images/<id>.png` with `masks/<id>.png` for every image, sorted by id.
Dataset load_directory(const std::filesystem::path& root);

/// Writes a dataset in the directory layout read by load_directory.
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);

Tensor image_from_png(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic data

/// Filled ellipse in pixel coordinates: x to the right, y down, pixel (i, j)
/// centred at (j + 0.5, i + 0.5). theta is the angle of the a-axis from +x.
struct Ellipse {
  double cx = 0, cy = 0, a = 1, b = 1, theta = 0;

  bool contains(double x, double y) const;
};

/// Union mask [1, height, width] of the ellipses evaluated at pixel centres.
Tensor rasterize(std::span<const Ellipse> ellipses, std::size_t height, std::size_t width);

struct SynthSample {
  Sample sample;
  std::vector<Ellipse> ellipses;
};

/// Deterministic stand-in for a polyp dataset: a smooth two-colour gradient
/// with low-amplitude noise as background and 1-3 reddish filled ellipses as
/// foreground. Masks outside a foreground fraction of [0.01, 0.6] are redrawn.
/// Sample i depends only on (seed, i, size).
std::vector<SynthSample> synth_dataset_with_shapes(std::size_t n, std::size_t size, std::uint64_t seed);
Dataset synth_dataset(std::size_t n, std::size_t size, std::uint64_t seed);

inline constexpr double kMinForeground = 0.01;
inline constexpr double kMaxForeground = 0.6;

// ---------------------------------------------------------------------------
// Splitting and batching

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Seeded permutation cut into contiguous slices: floor(train n), floor(val n),
/// remainder to test. Needs n >= 10.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);

struct Split {
  Dataset train, val, test;
};

Split split(const Dataset& dataset, const SplitSpec& spec);

/// Sample order for one epoch: a shuffle seeded by (seed, epoch), cut into
/// batches of batch_size with the short remainder kept last.
std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                 std::size_t epoch);

/// Seed of the augmentation stream for one sample in one epoch.
std::uint64_t sample_stream_seed(std::uint64_t seed, std::size_t epoch, const std::string& id);

struct Batch {
  Tensor images;  // [B, 3, S, S]
  Tensor masks;   // [B, 1, S, S]
  std::vector<std::string> ids;
};

struct AugmentationSpec;

/// Stacks the selected samples at target_size. With aug, each sample is
/// augmented using its own stream (sample_stream_seed); without, it is only
/// resized.
Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices, std::size_t target_size,
                 const AugmentationSpec* aug, std::uint64_t seed, std::size_t epoch);

std::vector<Batch> batches(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                           std::size_t target_size, const AugmentationSpec* aug = nullptr);

SEGFORGE_NAMESPACE_END
