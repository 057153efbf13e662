#include "segforge/augment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "segforge/error.hpp"
#include "segforge/log.hpp"

SEGFORGE_NAMESPACE_BEGIN

std::string to_string(Augmentation a) {
  switch (a) {
    case Augmentation::kCenterCrop:
      return "center_crop";
    case Augmentation::kRandomCrop:
      return "random_crop";
    case Augmentation::kHFlip:
      return "hflip";
    case Augmentation::kVFlip:
      return "vflip";
    case Augmentation::kScale:
      return "scale";
    case Augmentation::kRotate:
      return "rotate";
    case Augmentation::kCutout:
      return "cutout";
    case Augmentation::kBrightness:
      return "brightness";
  }
  return "";
}

Augmentation parse_augmentation(const std::string& name) {
  for (auto a : {Augmentation::kCenterCrop, Augmentation::kRandomCrop, Augmentation::kHFlip, Augmentation::kVFlip,
                 Augmentation::kScale, Augmentation::kRotate, Augmentation::kCutout, Augmentation::kBrightness}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown augmentation '" + name + "'");
}

AugmentationSpec AugmentationSpec::all_enabled() {
  AugmentationSpec s;
  s.enabled = {Augmentation::kCenterCrop, Augmentation::kRandomCrop, Augmentation::kHFlip, Augmentation::kVFlip,
               Augmentation::kScale,      Augmentation::kRotate,     Augmentation::kCutout, Augmentation::kBrightness};
  return s;
}

void AugmentationSpec::validate() const {
  if (target_size == 0) throw ConfigError("augmentation target_size must be positive");
  if (has(Augmentation::kCenterCrop) && has(Augmentation::kRandomCrop) && crop_margin < target_size) {
    throw ConfigError("crop_margin must be >= target_size when both crops are enabled");
  }
  if (!(rotate_min <= rotate_max)) throw ConfigError("rotation range must be ordered");
  if (!(scale_min > 0.0 && scale_min <= scale_max)) throw ConfigError("scale range must be positive and ordered");
  if (!(cutout_fraction > 0.0 && cutout_fraction <= 1.0)) throw ConfigError("cutout fraction must be in (0, 1]");
  if (!(brightness_min <= brightness_max)) throw ConfigError("brightness range must be ordered");
  if (!(probability >= 0.0 && probability <= 1.0)) throw ConfigError("augmentation probability must be in [0, 1]");
}

// ---------------------------------------------------------------------------

namespace {

struct Dims {
  std::size_t c, h, w;
};

Dims dims_of(const Tensor& t) {
  if (t.rank() != 3) throw ContractError("image tensors must be [C,H,W], got " + t.shape().str());
  return {t.dim(0), t.dim(1), t.dim(2)};
}

// Samples channel c at continuous coordinates (x, y) with pixel centres at +0.5.
Real sample_bilinear(const Real* plane, std::size_t h, std::size_t w, double x, double y) {
  const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(w - 1));
  const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(h - 1));
  const std::size_t x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double ax = fx - static_cast<double>(x0), ay = fy - static_cast<double>(y0);
  const double top = plane[y0 * w + x0] * (1 - ax) + plane[y0 * w + x1] * ax;
  const double bottom = plane[y1 * w + x0] * (1 - ax) + plane[y1 * w + x1] * ax;
  return static_cast<Real>(top * (1 - ay) + bottom * ay);
}

Real sample_nearest(const Real* plane, std::size_t h, std::size_t w, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  if (fx < 0 || fy < 0 || fx >= static_cast<double>(w) || fy >= static_cast<double>(h)) return Real{0};
  return plane[static_cast<std::size_t>(fy) * w + static_cast<std::size_t>(fx)];
}

// Resamples through an inverse map from output pixel centre to source point.
template <typename Map>
Tensor remap(const Tensor& image, std::size_t oh, std::size_t ow, bool nearest_zero_fill, Map&& source) {
  const Dims d = dims_of(image);
  Tensor out(Shape{d.c, oh, ow});
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      const auto [x, y] = source(static_cast<double>(j) + 0.5, static_cast<double>(i) + 0.5);
      for (std::size_t c = 0; c < d.c; ++c) {
        const Real* plane = src.data() + c * d.h * d.w;
        dst[(c * oh + i) * ow + j] =
            nearest_zero_fill ? sample_nearest(plane, d.h, d.w, x, y) : sample_bilinear(plane, d.h, d.w, x, y);
      }
    }
  }
  return out;
}

void binarize(Tensor& mask) {
  for (Real& v : mask.data()) v = v >= Real(0.5) ? Real{1} : Real{0};
}

std::atomic<bool> g_crop_warned{false};

}  // namespace

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  const Dims d = dims_of(image);
  const double sx = static_cast<double>(d.w) / static_cast<double>(width);
  const double sy = static_cast<double>(d.h) / static_cast<double>(height);
  return remap(image, height, width, false, [&](double x, double y) { return std::pair{x * sx, y * sy}; });
}

Tensor resize_nearest(const Tensor& image, std::size_t height, std::size_t width) {
  const Dims d = dims_of(image);
  Tensor out(Shape{d.c, height, width});
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < height; ++i) {
    // Pixel-centre mapping, the same one resize_bilinear uses.
    const std::size_t si = std::min(d.h - 1, (2 * i + 1) * d.h / (2 * height));
    for (std::size_t j = 0; j < width; ++j) {
      const std::size_t sj = std::min(d.w - 1, (2 * j + 1) * d.w / (2 * width));
      for (std::size_t c = 0; c < d.c; ++c) dst[(c * height + i) * width + j] = src[(c * d.h + si) * d.w + sj];
    }
  }
  return out;
}

Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  const Dims d = dims_of(image);
  if (top + height > d.h || left + width > d.w) throw ContractError("crop window outside image");
  Tensor out(Shape{d.c, height, width});
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t i = 0; i < height; ++i) {
      std::copy_n(src.begin() + (c * d.h + top + i) * d.w + left, width, dst.begin() + (c * height + i) * width);
    }
  }
  return out;
}

Tensor flip_horizontal(const Tensor& image) {
  const Dims d = dims_of(image);
  Tensor out(image.shape());
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < d.c * d.h; ++r) {
    for (std::size_t j = 0; j < d.w; ++j) dst[r * d.w + j] = src[r * d.w + (d.w - 1 - j)];
  }
  return out;
}

Tensor flip_vertical(const Tensor& image) {
  const Dims d = dims_of(image);
  Tensor out(image.shape());
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t i = 0; i < d.h; ++i) {
      std::copy_n(src.begin() + (c * d.h + (d.h - 1 - i)) * d.w, d.w, dst.begin() + (c * d.h + i) * d.w);
    }
  }
  return out;
}

Tensor rotate(const Tensor& image, double degrees, bool nearest_zero_fill) {
  const Dims d = dims_of(image);
  const double turns = degrees / 90.0;
  if (d.h == d.w && turns == std::round(turns)) {
    const int q = static_cast<int>(((static_cast<long>(std::round(turns)) % 4) + 4) % 4);
    if (q == 0) return image.clone();
    const std::size_t n = d.h;
    Tensor out(image.shape());
    auto src = image.data();
    auto dst = out.data();
    for (std::size_t c = 0; c < d.c; ++c) {
      const Real* s = src.data() + c * n * n;
      Real* o = dst.data() + c * n * n;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          // Counter-clockwise by q quarter turns.
          std::size_t si = 0, sj = 0;
          if (q == 1) {
            si = j;
            sj = n - 1 - i;
          } else if (q == 2) {
            si = n - 1 - i;
            sj = n - 1 - j;
          } else {
            si = n - 1 - j;
            sj = i;
          }
          o[i * n + j] = s[si * n + sj];
        }
      }
    }
    return out;
  }
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cx = static_cast<double>(d.w) / 2.0, cy = static_cast<double>(d.h) / 2.0;
  return remap(image, d.h, d.w, nearest_zero_fill, [&](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    return std::pair{cx + dx * cs - dy * sn, cy + dx * sn + dy * cs};
  });
}

Tensor zoom(const Tensor& image, double factor, bool nearest_zero_fill) {
  if (!(factor > 0.0)) throw ContractError("zoom factor must be positive");
  const Dims d = dims_of(image);
  const double cx = static_cast<double>(d.w) / 2.0, cy = static_cast<double>(d.h) / 2.0;
  return remap(image, d.h, d.w, nearest_zero_fill, [&](double x, double y) {
    return std::pair{cx + (x - cx) / factor, cy + (y - cy) / factor};
  });
}

Sample resize_sample(const Sample& sample, std::size_t size) {
  Sample out{sample.image, sample.mask, sample.id};
  if (sample.image.dim(1) != size || sample.image.dim(2) != size) {
    out.image = resize_bilinear(sample.image, size, size);
    out.mask = resize_nearest(sample.mask, size, size);
    binarize(out.mask);
  }
  return out;
}

AugmentParams sample_augmentation(const AugmentationSpec& spec, std::size_t height, std::size_t width, Rng& rng) {
  AugmentParams p;
  const bool center = spec.has(Augmentation::kCenterCrop);
  const bool random = spec.has(Augmentation::kRandomCrop);
  if (center || random) {
    if (height >= spec.crop_margin && width >= spec.crop_margin) {
      const bool use_random = random && (!center || rng.coin());
      CropWindow w;
      w.size = spec.crop_margin;
      if (use_random) {
        w.top = rng.below(height - spec.crop_margin + 1);
        w.left = rng.below(width - spec.crop_margin + 1);
      } else {
        w.top = (height - spec.crop_margin) / 2;
        w.left = (width - spec.crop_margin) / 2;
      }
      p.crop = w;
    } else if (!g_crop_warned.exchange(true)) {
      log_warning("sample smaller than crop margin " + std::to_string(spec.crop_margin) + "; crops skipped");
    }
  }
  // One draw per transform in fixed order, so the stream layout does not
  // depend on which transforms end up applied.
  const double pr = spec.probability;
  const bool do_h = rng.coin(pr), do_v = rng.coin(pr), do_rot = rng.coin(pr), do_scale = rng.coin(pr),
             do_cut = rng.coin(pr), do_bright = rng.coin(pr);
  const double angle = rng.uniform(spec.rotate_min, spec.rotate_max);
  const double factor = rng.uniform(spec.scale_min, spec.scale_max);
  const double cut_u = rng.uniform(), cut_v = rng.uniform();
  const double delta = rng.uniform(spec.brightness_min, spec.brightness_max);

  if (spec.has(Augmentation::kHFlip)) p.hflip = do_h;
  if (spec.has(Augmentation::kVFlip)) p.vflip = do_v;
  if (spec.has(Augmentation::kRotate) && do_rot) p.angle = spec.rotate_min == spec.rotate_max ? spec.rotate_min : angle;
  if (spec.has(Augmentation::kScale) && do_scale) p.scale = factor;
  if (spec.has(Augmentation::kCutout) && do_cut) {
    const std::size_t s = spec.target_size;
    CutoutBox box;
    box.height = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(spec.cutout_fraction * s)));
    box.width = box.height;
    box.top = static_cast<std::size_t>(cut_u * static_cast<double>(s - box.height + 1));
    box.left = static_cast<std::size_t>(cut_v * static_cast<double>(s - box.width + 1));
    p.cutout = box;
  }
  if (spec.has(Augmentation::kBrightness) && do_bright) p.brightness = delta;
  return p;
}

Sample apply_augmentation(const Sample& sample, const AugmentParams& p, const AugmentationSpec& spec) {
  Sample s{sample.image, sample.mask, sample.id};
  if (p.crop) {
    s.image = crop(s.image, p.crop->top, p.crop->left, p.crop->size, p.crop->size);
    s.mask = crop(s.mask, p.crop->top, p.crop->left, p.crop->size, p.crop->size);
  }
  const double turns = p.angle / 90.0;
  if (turns == std::round(turns) && p.scale == 1.0) {
    // Index permutations only, so flips and quarter turns stay exact.
    s = resize_sample(s, spec.target_size);
    if (p.hflip) {
      s.image = flip_horizontal(s.image);
      s.mask = flip_horizontal(s.mask);
    }
    if (p.vflip) {
      s.image = flip_vertical(s.image);
      s.mask = flip_vertical(s.mask);
    }
    if (p.angle != 0.0) {
      s.image = rotate(s.image, p.angle, false);
      s.mask = rotate(s.mask, p.angle, true);
    }
  } else {
    // Resize, flips, rotation and zoom composed into one inverse map, so image
    // and mask are each resampled once from the same source point. Chained
    // nearest lookups would otherwise let the mask drift a pixel per stage.
    const Dims d = dims_of(s.image);
    const double n = static_cast<double>(spec.target_size), c = n / 2.0;
    const double sx = static_cast<double>(d.w) / n, sy = static_cast<double>(d.h) / n;
    const double rad = p.angle * std::numbers::pi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    auto source = [&](double x, double y) {
      x = c + (x - c) / p.scale;
      y = c + (y - c) / p.scale;
      const double dx = x - c, dy = y - c;
      x = c + dx * cs - dy * sn;
      y = c + dx * sn + dy * cs;
      if (p.vflip) y = n - y;
      if (p.hflip) x = n - x;
      return std::pair{x * sx, y * sy};
    };
    s.image = remap(s.image, spec.target_size, spec.target_size, false, source);
    s.mask = remap(s.mask, spec.target_size, spec.target_size, true, source);
  }
  if (p.cutout) {
    if (s.image.same_storage(sample.image)) s.image = s.image.clone();
    const std::size_t c = s.image.dim(0), h = s.image.dim(1), w = s.image.dim(2);
    auto d = s.image.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = p.cutout->top; i < std::min(h, p.cutout->top + p.cutout->height); ++i) {
        for (std::size_t j = p.cutout->left; j < std::min(w, p.cutout->left + p.cutout->width); ++j) {
          d[(ch * h + i) * w + j] = Real{0};
        }
      }
    }
  }
  if (p.brightness != 0.0) {
    if (s.image.same_storage(sample.image)) s.image = s.image.clone();
    for (Real& v : s.image.data()) v = std::clamp(static_cast<Real>(v + p.brightness), Real{0}, Real{1});
  }
  if (s.mask.same_storage(sample.mask)) s.mask = s.mask.clone();
  binarize(s.mask);
  return s;
}

Sample augment(const Sample& sample, const AugmentationSpec& spec, Rng& rng) {
  const AugmentParams p = sample_augmentation(spec, sample.image.dim(1), sample.image.dim(2), rng);
  return apply_augmentation(sample, p, spec);
}

Ellipse flip_horizontal(const Ellipse& e, std::size_t size) {
  return Ellipse{static_cast<double>(size) - e.cx, e.cy, e.a, e.b, -e.theta};
}

Ellipse flip_vertical(const Ellipse& e, std::size_t size) {
  return Ellipse{e.cx, static_cast<double>(size) - e.cy, e.a, e.b, -e.theta};
}

Ellipse rotate_quarter(const Ellipse& e, std::size_t size, int quarter_turns) {
  Ellipse r = e;
  const double c = static_cast<double>(size) / 2.0;
  const int q = ((quarter_turns % 4) + 4) % 4;
  for (int k = 0; k < q; ++k) {
    // Counter-clockwise on screen (y down): (dx, dy) -> (dy, -dx).
    const double dx = r.cx - c, dy = r.cy - c;
    r.cx = c + dy;
    r.cy = c - dx;
    r.theta -= std::numbers::pi / 2.0;
  }
  return r;
}

SEGFORGE_NAMESPACE_END
