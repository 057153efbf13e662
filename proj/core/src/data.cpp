#include "segforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "segforge/augment.hpp"
#include "segforge/error.hpp"
#include "segforge/png.hpp"
#include "segforge/rng.hpp"

SEGFORGE_NAMESPACE_BEGIN

namespace fs = std::filesystem;

namespace {

Real luminance(const Image8& img, int y, int x) {
  if (img.channels == 1) return static_cast<Real>(img.at(y, x, 0));
  return static_cast<Real>(0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2));
}

std::uint8_t to_byte(Real v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(static_cast<double>(v) * 255.0), 0L, 255L));
}

}  // namespace

Tensor image_from_png(const fs::path& path) {
  const Image8 img = read_png(path);
  const auto h = static_cast<std::size_t>(img.height), w = static_cast<std::size_t>(img.width);
  Tensor out(Shape{3, h, w});
  auto d = out.data();
  for (std::size_t c = 0; c < 3; ++c) {
    const int src_c = img.channels == 1 ? 0 : static_cast<int>(c);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        d[(c * h + i) * w + j] = static_cast<Real>(img.at(static_cast<int>(i), static_cast<int>(j), src_c)) / Real(255);
      }
    }
  }
  return out;
}

Sample load_pair(const fs::path& image_path, const fs::path& mask_path) {
  Sample s;
  s.id = image_path.stem().string();
  s.image = image_from_png(image_path);
  const Image8 m = read_png(mask_path);
  if (static_cast<std::size_t>(m.height) != s.image.dim(1) || static_cast<std::size_t>(m.width) != s.image.dim(2)) {
    throw DataError("mask size " + std::to_string(m.width) + "x" + std::to_string(m.height) +
                    " does not match image " + image_path.string());
  }
  s.mask = Tensor(Shape{1, s.image.dim(1), s.image.dim(2)});
  auto d = s.mask.data();
  for (int i = 0; i < m.height; ++i) {
    for (int j = 0; j < m.width; ++j) {
      d[static_cast<std::size_t>(i) * m.width + j] = luminance(m, i, j) >= Real(128) ? Real{1} : Real{0};
    }
  }
  return s;
}

Dataset load_directory(const fs::path& root) {
  const fs::path images = root / "images", masks = root / "masks";
  if (!fs::is_directory(images)) throw DataError("missing directory " + images.string());
  if (!fs::is_directory(masks)) throw DataError("missing directory " + masks.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .png images in " + images.string());
  Dataset out;
  out.reserve(files.size());
  for (const auto& f : files) {
    const fs::path m = masks / f.filename();
    if (!fs::exists(m)) throw DataError("missing mask for " + f.filename().string());
    out.push_back(load_pair(f, m));
  }
  return out;
}

void save_dataset(const Dataset& dataset, const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  for (const Sample& s : dataset) {
    const std::size_t h = s.image.dim(1), w = s.image.dim(2);
    Image8 img{static_cast<int>(w), static_cast<int>(h), 3, std::vector<std::uint8_t>(h * w * 3)};
    Image8 mask{static_cast<int>(w), static_cast<int>(h), 1, std::vector<std::uint8_t>(h * w)};
    auto id = s.image.data();
    auto md = s.mask.data();
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        for (std::size_t c = 0; c < 3; ++c) {
          img.at(static_cast<int>(i), static_cast<int>(j), static_cast<int>(c)) = to_byte(id[(c * h + i) * w + j]);
        }
        mask.at(static_cast<int>(i), static_cast<int>(j), 0) = md[i * w + j] >= Real(0.5) ? 255 : 0;
      }
    }
    write_png(root / "images" / (s.id + ".png"), img);
    write_png(root / "masks" / (s.id + ".png"), mask);
  }
}

// ---------------------------------------------------------------------------

bool Ellipse::contains(double x, double y) const {
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(theta), s = std::sin(theta);
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
}

Tensor rasterize(std::span<const Ellipse> ellipses, std::size_t height, std::size_t width) {
  Tensor mask(Shape{1, height, width});
  auto d = mask.data();
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const double x = static_cast<double>(j) + 0.5, y = static_cast<double>(i) + 0.5;
      for (const Ellipse& e : ellipses) {
        if (e.contains(x, y)) {
          d[i * width + j] = Real{1};
          break;
        }
      }
    }
  }
  return mask;
}

namespace {

SynthSample synth_one(std::size_t index, std::size_t size, std::uint64_t seed) {
  Rng rng(derive_seed(seed, index));
  const double s = static_cast<double>(size);
  char id[32];
  std::snprintf(id, sizeof id, "synth_%05zu", index);

  std::vector<Ellipse> shapes;
  Tensor mask;
  for (;;) {
    shapes.clear();
    const std::size_t count = 1 + rng.below(3);
    for (std::size_t k = 0; k < count; ++k) {
      Ellipse e;
      e.cx = rng.uniform(0.15 * s, 0.85 * s);
      e.cy = rng.uniform(0.15 * s, 0.85 * s);
      e.a = rng.uniform(0.08 * s, 0.3 * s);
      e.b = rng.uniform(0.08 * s, 0.3 * s);
      e.theta = rng.uniform(0.0, std::numbers::pi);
      shapes.push_back(e);
    }
    mask = rasterize(shapes, size, size);
    double fg = 0;
    for (Real v : mask.data()) fg += v;
    fg /= s * s;
    if (fg >= kMinForeground && fg <= kMaxForeground) break;
  }

  double c0[3], c1[3], fgc[3][3];
  for (double& v : c0) v = rng.uniform(0.1, 0.5);
  for (double& v : c1) v = rng.uniform(0.1, 0.5);
  const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(dir), gy = std::sin(dir);
  for (auto& col : fgc) {
    col[0] = rng.uniform(0.65, 0.95);
    col[1] = rng.uniform(0.25, 0.55);
    col[2] = rng.uniform(0.2, 0.5);
  }

  Tensor image(Shape{3, size, size});
  auto d = image.data();
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const double x = (static_cast<double>(j) + 0.5) / s - 0.5, y = (static_cast<double>(i) + 0.5) / s - 0.5;
      const double t = std::clamp(0.5 + (x * gx + y * gy), 0.0, 1.0);
      const double* fill = nullptr;
      for (std::size_t k = 0; k < shapes.size(); ++k) {
        if (shapes[k].contains(static_cast<double>(j) + 0.5, static_cast<double>(i) + 0.5)) {
          fill = fgc[k];
          break;
        }
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = fill ? fill[c] : c0[c] * (1 - t) + c1[c] * t;
        d[(c * size + i) * size + j] = static_cast<Real>(std::clamp(base + 0.03 * rng.normal(), 0.0, 1.0));
      }
    }
  }
  return SynthSample{Sample{image, mask, id}, std::move(shapes)};
}

}  // namespace

std::vector<SynthSample> synth_dataset_with_shapes(std::size_t n, std::size_t size, std::uint64_t seed) {
  if (size < 8) throw ConfigError("synthetic image size must be at least 8");
  std::vector<SynthSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth_one(i, size, seed));
  return out;
}

Dataset synth_dataset(std::size_t n, std::size_t size, std::uint64_t seed) {
  Dataset out;
  out.reserve(n);
  for (auto& s : synth_dataset_with_shapes(n, size, seed)) out.push_back(std::move(s.sample));
  return out;
}

// ---------------------------------------------------------------------------

void SplitSpec::validate() const {
  if (train < 0 || val < 0 || test < 0) throw ConfigError("split fractions must be non-negative");
  if (std::abs(train + val + test - 1.0) > 1e-6) throw ConfigError("split fractions must sum to 1");
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  if (n < 10) throw ConfigError("dataset has " + std::to_string(n) + " samples; splitting needs at least 10");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(spec.seed, 0x5b117));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  // The epsilon keeps 0.8 * 10 from flooring to 7.
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(n) + 1e-9));
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                 perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return out;
}

Split split(const Dataset& dataset, const SplitSpec& spec) {
  const SplitIndices idx = split_indices(dataset.size(), spec);
  Split out;
  for (auto i : idx.train) out.train.push_back(dataset[i]);
  for (auto i : idx.val) out.val.push_back(dataset[i]);
  for (auto i : idx.test) out.test.push_back(dataset[i]);
  return out;
}

std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                 std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  if (n > 1) {
    Rng rng(derive_seed(seed, 0xba7c4, epoch));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch_size)));
  }
  return out;
}

std::uint64_t sample_stream_seed(std::uint64_t seed, std::size_t epoch, const std::string& id) {
  return derive_seed(seed, epoch, hash_string(id));
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices, std::size_t target_size,
                 const AugmentationSpec* aug, std::uint64_t seed, std::size_t epoch) {
  if (indices.empty()) throw ContractError("empty batch");
  const std::size_t b = indices.size(), s = target_size;
  Batch out;
  out.images = Tensor(Shape{b, 3, s, s});
  out.masks = Tensor(Shape{b, 1, s, s});
  auto id = out.images.data();
  auto md = out.masks.data();
  for (std::size_t k = 0; k < b; ++k) {
    const Sample& src = dataset.at(indices[k]);
    Sample ready;
    if (aug != nullptr) {
      AugmentationSpec spec = *aug;
      spec.target_size = s;
      Rng rng(sample_stream_seed(seed, epoch, src.id));
      ready = augment(src, spec, rng);
    } else {
      ready = resize_sample(src, s);
    }
    const auto im = ready.image.data();
    const auto mm = ready.mask.data();
    std::copy(im.begin(), im.end(), id.begin() + static_cast<std::ptrdiff_t>(k * 3 * s * s));
    std::copy(mm.begin(), mm.end(), md.begin() + static_cast<std::ptrdiff_t>(k * s * s));
    out.ids.push_back(src.id);
  }
  return out;
}

std::vector<Batch> batches(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                           std::size_t target_size, const AugmentationSpec* aug) {
  std::vector<Batch> out;
  for (const auto& idx : batch_plan(dataset.size(), batch_size, seed, epoch)) {
    out.push_back(make_batch(dataset, idx, target_size, aug, seed, epoch));
  }
  return out;
}

SEGFORGE_NAMESPACE_END
