#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "segforge/ops.hpp"
#include "segforge/rng.hpp"
#include "segforge/tensor.hpp"

SEGFORGE_NAMESPACE_BEGIN

/// Learnable tensor plus its Adam moment slots.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<Real> adam_m;
  std::vector<Real> adam_v;
};

/// Non-learnable persistent tensor (batch-norm running statistics).
struct Buffer {
  std::string name;
  Tensor value;
};

/// Ordered registry of every parameter and buffer of a network. Names are
/// unique; registration order is construction order and therefore stable for a
/// given configuration.
class ParameterStore {
 public:
  Tensor add_parameter(const std::string& name, Tensor value);
  Tensor add_buffer(const std::string& name, Tensor value);

  std::vector<Parameter>& parameters() noexcept { return parameters_; }
  const std::vector<Parameter>& parameters() const noexcept { return parameters_; }
  const std::vector<Buffer>& buffers() const noexcept { return buffers_; }

  const Parameter* find_parameter(const std::string& name) const;
  const Buffer* find_buffer(const std::string& name) const;

  /// Total number of learnable scalars.
  std::size_t scalar_count() const;

  void zero_grad();

 private:
  void claim(const std::string& name);

  std::vector<Parameter> parameters_;
  std::vector<Buffer> buffers_;
  std::vector<std::string> names_;
};

/// Creates named, initialized layers inside a store.
///
/// Convolution weights are He-normal with fan-in scaling, std = sqrt(2 / (Cin k k)),
/// drawn from the builder's Rng in registration order; biases and BN beta start
/// at 0, BN gamma at 1, running statistics at mean 0 / variance 1.
class LayerBuilder {
 public:
  LayerBuilder(ParameterStore& store, Rng& rng, std::string prefix = {})
      : store_(&store), rng_(&rng), prefix_(std::move(prefix)) {}

  LayerBuilder scope(const std::string& name) const;
  std::string qualified(const std::string& name) const;

  ParameterStore& store() const { return *store_; }
  Rng& rng() const { return *rng_; }

 private:
  ParameterStore* store_;
  Rng* rng_;
  std::string prefix_;
};

struct Conv {
  Tensor weight;  // [Cout, Cin, k, k]
  Tensor bias;    // [Cout] or undefined
  Conv2dOptions options;

  static Conv create(const LayerBuilder& b, const std::string& name, std::size_t in, std::size_t out,
                     std::size_t kernel, bool with_bias, Conv2dOptions options = {});

  /// Same-size 3x3 convolution with the given stride and dilation.
  static Conv create3x3(const LayerBuilder& b, const std::string& name, std::size_t in, std::size_t out, bool with_bias,
                        int stride = 1, int dilation = 1);

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, options); }
};

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  BatchNormState state;

  static BatchNorm create(const LayerBuilder& b, const std::string& name, std::size_t channels);

  Tensor operator()(const Tensor& x, Mode mode) { return batchnorm2d(x, gamma, beta, state, mode); }
};

/// Parameter count of a convolution layer.
constexpr std::size_t conv_params(std::size_t in, std::size_t out, std::size_t kernel, bool bias) {
  return in * out * kernel * kernel + (bias ? out : 0);
}

constexpr std::size_t bn_params(std::size_t channels) { return 2 * channels; }

SEGFORGE_NAMESPACE_END
