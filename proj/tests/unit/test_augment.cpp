#include <gtest/gtest.h>

#include <cmath>

#include "segforge/augment.hpp"
#include "segforge/error.hpp"
#include "test_util.hpp"

using namespace segforge;

namespace {

bool binary(const Tensor& m) {
  for (Real v : m.data()) {
    if (v != 0 && v != 1) return false;
  }
  return true;
}

// Sample whose image carries its own mask in every channel, so geometric
// correspondence can be read back from the image.
Sample self_labelled(std::size_t size, std::uint64_t seed) {
  SynthSample s = synth_dataset_with_shapes(1, size, seed)[0];
  Sample out = s.sample;
  out.image = Tensor(Shape{3, size, size});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t k = 0; k < size * size; ++k) out.image.data()[c * size * size + k] = out.mask.data()[k];
  return out;
}

}  // namespace

TEST(Augment, NamesAndValidation) {
  for (auto a : AugmentationSpec::all_enabled().enabled) EXPECT_EQ(parse_augmentation(to_string(a)), a);
  EXPECT_THROW(parse_augmentation("mixup"), ConfigError);
  AugmentationSpec s = AugmentationSpec::all_enabled();
  EXPECT_NO_THROW(s.validate());
  s.crop_margin = 100;
  EXPECT_THROW(s.validate(), ConfigError);
  s = AugmentationSpec{};
  s.scale_min = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Augment, EmptySetOnlyResizes) {
  Sample s = synth_dataset(1, 40, 1)[0];
  AugmentationSpec spec;
  spec.target_size = 24;
  Rng rng(2);
  Sample a = augment(s, spec, rng);
  Sample r = resize_sample(s, 24);
  EXPECT_TRUE(testutil::bitwise_equal(a.image, r.image));
  EXPECT_TRUE(testutil::bitwise_equal(a.mask, r.mask));
}

TEST(Augment, FlipsAreInvolutions) {
  Tensor x = testutil::random_tensor(Shape{3, 7, 9}, 3);
  EXPECT_TRUE(testutil::bitwise_equal(flip_horizontal(flip_horizontal(x)), x));
  EXPECT_TRUE(testutil::bitwise_equal(flip_vertical(flip_vertical(x)), x));
  Sample s = synth_dataset(1, 16, 4)[0];
  AugmentationSpec spec;
  spec.target_size = 16;
  AugmentParams p;
  p.hflip = true;
  Sample twice = apply_augmentation(apply_augmentation(s, p, spec), p, spec);
  EXPECT_TRUE(testutil::bitwise_equal(twice.image, s.image));
  EXPECT_TRUE(testutil::bitwise_equal(twice.mask, s.mask));
}

TEST(Augment, QuarterRotationMovesPixelAnalytically) {
  const std::size_t n = 10;
  for (std::size_t r : {1, 2, 7}) {
    for (std::size_t c : {0, 3, 8}) {
      Tensor m(Shape{1, n, n});
      m.data()[r * n + c] = 1;
      Tensor out = rotate(m, 90, true);
      // Counter-clockwise about the centre with y pointing down:
      // (x, y) -> (cx + (y - cy), cy - (x - cx)) on pixel centres.
      const double half = n / 2.0, x = c + 0.5, y = r + 0.5;
      const double nx = half + (y - half), ny = half - (x - half);
      const std::size_t ei = std::size_t(ny - 0.5), ej = std::size_t(nx - 0.5);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(out.data()[i * n + j], (i == ei && j == ej) ? 1 : 0);
    }
  }
  Tensor x = testutil::random_tensor(Shape{2, 6, 6}, 5);
  EXPECT_TRUE(testutil::bitwise_equal(rotate(rotate(x, 90, false), 270, false), x));
  EXPECT_TRUE(testutil::bitwise_equal(rotate(rotate(x, 180, false), 180, false), x));
}

TEST(Augment, ExactTransformsMatchRasterizedEllipses) {
  const std::size_t n = 32;
  AugmentationSpec spec;
  spec.target_size = n;
  for (const auto& s : synth_dataset_with_shapes(8, n, 6)) {
    for (int code = 0; code < 16; ++code) {
      AugmentParams p;
      p.hflip = code & 1;
      p.vflip = code & 2;
      const int q = code >> 2;
      p.angle = 90.0 * q;
      Sample out = apply_augmentation(s.sample, p, spec);
      std::vector<Ellipse> moved;
      for (Ellipse e : s.ellipses) {
        if (p.hflip) e = flip_horizontal(e, n);
        if (p.vflip) e = flip_vertical(e, n);
        moved.push_back(rotate_quarter(e, n, q));
      }
      EXPECT_TRUE(testutil::bitwise_equal(out.mask, rasterize(moved, n, n))) << s.sample.id << " code " << code;
    }
  }
}

TEST(Augment, RandomPipelineKeepsMaskBinaryAndAligned) {
  AugmentationSpec spec = AugmentationSpec::all_enabled();
  spec.crop_margin = 40;
  spec.target_size = 32;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Sample s = self_labelled(48, seed);
    Rng rng(seed);
    const AugmentParams p = sample_augmentation(spec, 48, 48, rng);
    Sample out = apply_augmentation(s, p, spec);
    ASSERT_EQ(out.image.shape(), (Shape{3, 32, 32}));
    ASSERT_EQ(out.mask.shape(), (Shape{1, 32, 32}));
    EXPECT_TRUE(binary(out.mask));
    // Out-of-frame pixels are edge-replicated in the image but zero in the
    // mask, so only compare where an all-ones mask survives the geometry.
    Sample ones = s;
    ones.mask = Tensor::full(Shape{1, 48, 48}, 1);
    const Sample frame = apply_augmentation(ones, p, spec);
    std::size_t agree = 0, total = 0;
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) {
        if (frame.mask.data()[i * 32 + j] != 1) continue;
        if (p.cutout && i >= p.cutout->top && i < p.cutout->top + p.cutout->height && j >= p.cutout->left &&
            j < p.cutout->left + p.cutout->width)
          continue;
        ++total;
        agree += (out.image.data()[i * 32 + j] >= 0.5) == (out.mask.data()[i * 32 + j] == 1);
      }
    EXPECT_GE(double(agree) / total, 0.95) << seed;
  }
}

TEST(Augment, CutoutAndBrightnessLeaveMask) {
  Sample s = synth_dataset(1, 16, 7)[0];
  AugmentationSpec spec;
  spec.target_size = 16;
  AugmentParams p;
  p.cutout = CutoutBox{2, 3, 4, 5};
  p.brightness = 0.3;
  Sample out = apply_augmentation(s, p, spec);
  EXPECT_TRUE(testutil::bitwise_equal(out.mask, s.mask));
  EXPECT_EQ(out.image.data()[3 * 16 + 4], Real(0.3));  // zeroed, then brightened
  for (Real v : out.image.data()) EXPECT_LE(v, 1);
  // The source sample is untouched.
  EXPECT_FALSE(out.image.same_storage(s.image));
}

TEST(Augment, SmallInputsSkipCrops) {
  AugmentationSpec spec;
  spec.enabled = {Augmentation::kCenterCrop, Augmentation::kRandomCrop};
  spec.target_size = 16;
  Rng rng(8);
  EXPECT_FALSE(sample_augmentation(spec, 100, 100, rng).crop.has_value());
  AugmentParams p = sample_augmentation(spec, 400, 360, rng);
  ASSERT_TRUE(p.crop.has_value());
  EXPECT_EQ(p.crop->size, 320u);
  EXPECT_LE(p.crop->top + 320, 400u);
  EXPECT_LE(p.crop->left + 320, 360u);
}

TEST(Augment, DrawsStayInRanges) {
  AugmentationSpec spec = AugmentationSpec::all_enabled();
  spec.target_size = 64;
  Rng rng(9);
  for (int k = 0; k < 500; ++k) {
    AugmentParams p = sample_augmentation(spec, 64, 64, rng);
    EXPECT_GE(p.angle, 0.0);
    EXPECT_LE(p.angle, 90.0);
    EXPECT_GE(p.scale, 0.8);
    EXPECT_LE(p.scale, 1.2);
    EXPECT_GE(p.brightness, -0.2);
    EXPECT_LE(p.brightness, 0.2);
    if (p.cutout) {
      EXPECT_EQ(p.cutout->height, 16u);
      EXPECT_LE(p.cutout->top + p.cutout->height, 64u);
    }
  }
}
