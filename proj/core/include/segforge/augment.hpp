#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>

#include "segforge/data.hpp"
#include "segforge/rng.hpp"

SEGFORGE_NAMESPACE_BEGIN

enum class Augmentation { kCenterCrop, kRandomCrop, kHFlip, kVFlip, kScale, kRotate, kCutout, kBrightness };

std::string to_string(Augmentation a);
Augmentation parse_augmentation(const std::string& name);

struct AugmentationSpec {
  std::set<Augmentation> enabled;
  std::size_t crop_margin = 320;
  std::size_t target_size = 256;
  double rotate_min = 0.0;  // degrees
  double rotate_max = 90.0;
  double scale_min = 0.8;
  double scale_max = 1.2;
  double cutout_fraction = 0.25;
  double brightness_min = -0.2;
  double brightness_max = 0.2;
  /// Probability of applying each enabled flip/rotate/scale/cutout/brightness.
  double probability = 0.5;

  static AugmentationSpec all_enabled();

  bool has(Augmentation a) const { return enabled.count(a) != 0; }
  void validate() const;
};

struct CropWindow {
  std::size_t top = 0, left = 0, size = 0;
};

struct CutoutBox {
  std::size_t top = 0, left = 0, height = 0, width = 0;
};

/// Concrete draw of an augmentation pipeline for one sample.
struct AugmentParams {
  std::optional<CropWindow> crop;
  bool hflip = false;
  bool vflip = false;
  double angle = 0.0;  // degrees, counter-clockwise; 0 = not applied
  double scale = 1.0;
  std::optional<CutoutBox> cutout;
  double brightness = 0.0;
};

/// Draws parameters for a sample of the given source size. Crops need the
/// sample to be at least crop_margin in both dimensions; otherwise they are
/// skipped (a warning is logged once per process).
AugmentParams sample_augmentation(const AugmentationSpec& spec, std::size_t height, std::size_t width, Rng& rng);

/// Pipeline order: crop, resize to target_size, hflip, vflip, rotate, scale,
/// cutout, brightness. Geometric steps move image and mask together (image
/// bilinear with edge replication, mask nearest with zero fill); cutout and
/// brightness touch the image only. When a free rotation or a zoom is drawn,
/// the geometric steps after the crop are applied as one composed resampling.
Sample apply_augmentation(const Sample& sample, const AugmentParams& params, const AugmentationSpec& spec);

Sample augment(const Sample& sample, const AugmentationSpec& spec, Rng& rng);

// Primitives on [C, H, W] tensors.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);
Tensor resize_nearest(const Tensor& image, std::size_t height, std::size_t width);
Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t height, std::size_t width);
Tensor flip_horizontal(const Tensor& image);
Tensor flip_vertical(const Tensor& image);
/// Counter-clockwise rotation about the image centre, output the same size.
/// Multiples of 90 degrees on square inputs are exact pixel permutations.
Tensor rotate(const Tensor& image, double degrees, bool nearest_zero_fill);
/// Zoom about the centre by factor (> 1 enlarges content).
Tensor zoom(const Tensor& image, double factor, bool nearest_zero_fill);

/// Resizes image (bilinear) and mask (nearest) to size x size.
Sample resize_sample(const Sample& sample, std::size_t size);

/// Ellipse transforms matching flip_horizontal / flip_vertical / rotate(90 k)
/// on a square canvas of the given size.
Ellipse flip_horizontal(const Ellipse& e, std::size_t size);
Ellipse flip_vertical(const Ellipse& e, std::size_t size);
Ellipse rotate_quarter(const Ellipse& e, std::size_t size, int quarter_turns);

SEGFORGE_NAMESPACE_END
