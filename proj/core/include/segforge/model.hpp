#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "segforge/blocks.hpp"
#include "segforge/layers.hpp"

SEGFORGE_NAMESPACE_BEGIN

enum class Architecture { kResUNetPlusPlus, kUNet };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);  // "resunetpp" | "unet"

struct ModelConfig {
  std::size_t in_channels = 3;
  std::array<std::size_t, 5> filters{16, 32, 64, 128, 256};
  std::size_t se_reduction = 8;
  std::vector<int> aspp_rates{1, 6, 12, 18};
  /// Drop ASPP rates too wide for the feature map instead of failing.
  bool aspp_clamp = true;
  std::size_t input_size = 256;
  Architecture arch = Architecture::kResUNetPlusPlus;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  /// Compact JSON with keys in fixed (sorted) order.
  std::string to_json() const;
  /// Strict parse: unknown keys and wrong types are ConfigErrors. Missing keys
  /// keep their defaults.
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

/// Small configuration for tests and quick experiments: filters
/// [4, 8, 16, 32, 64] with SE reduction 4 (a reduction of 8 would leave the
/// 4-channel stem gate without channels).
ModelConfig toy_model_config(std::size_t input_size = 16, Architecture arch = Architecture::kResUNetPlusPlus);

/// Intermediate feature maps of one forward pass, for shape introspection.
/// For the U-Net baseline, stem/enc1/enc2 are the first three encoder levels
/// and enc3 is unused (undefined).
struct FeatureMaps {
  Tensor stem, enc1, enc2, enc3;
  Tensor bridge;
  Tensor dec1, dec2, dec3;
  Tensor head;    // final ASPP output (ResUNet++) or dec3 (U-Net)
  Tensor logits;  // [N, 1, S, S]
  Tensor output;  // sigmoid(logits)
};

class Network {
 public:
  virtual ~Network() = default;
  virtual FeatureMaps forward(const Tensor& x, Mode mode) = 0;
};

/// A built network with its parameter registry.
///
/// ResUNet++ wiring (f = filters):
///   stem(f0) -> enc1(f1) /2 -> enc2(f2) /4 -> enc3(f3) /8 -> aspp(f4)
///   -> dec1(skip enc2, f3) -> dec2(skip enc1, f2) -> dec3(skip stem, f1)
///   -> aspp(f0) -> conv1x1(f0 -> 1) -> sigmoid
///
/// U-Net baseline: double-conv encoder f0, f1, f2 with 2x2 max-pooling, a
/// double-conv bridge f3, and three decoder levels of nearest upsampling,
/// concatenation and double conv back to f0, then the same 1x1 + sigmoid head.
///
/// Move-only: blocks share storage with the registry.
class Model {
 public:
  static Model build(const ModelConfig& config, std::uint64_t seed = 0);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  ~Model();

  /// x: [N, in_channels, S, S] with S == input_size; returns probabilities
  /// [N, 1, S, S].
  Tensor forward(const Tensor& x, Mode mode);
  FeatureMaps forward_features(const Tensor& x, Mode mode);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore& store() noexcept { return *store_; }
  const ParameterStore& store() const noexcept { return *store_; }
  std::size_t parameter_count() const { return store_->scalar_count(); }

  /// Rates actually instantiated in the bridge and head ASPP blocks.
  const std::vector<int>& bridge_rates() const noexcept { return bridge_rates_; }
  const std::vector<int>& head_rates() const noexcept { return head_rates_; }

 private:
  Model() = default;

  ModelConfig config_;
  std::unique_ptr<ParameterStore> store_;
  std::unique_ptr<Network> network_;
  std::vector<int> bridge_rates_;
  std::vector<int> head_rates_;
};

/// Closed-form parameter count for a configuration, from the per-block
/// formulas in blocks.hpp.
std::size_t expected_parameter_count(const ModelConfig& config);

SEGFORGE_NAMESPACE_END
