#include "segforge/layers.hpp"

#include <algorithm>
#include <cmath>

#include "segforge/error.hpp"

SEGFORGE_NAMESPACE_BEGIN

void ParameterStore::claim(const std::string& name) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  names_.push_back(name);
}

Tensor ParameterStore::add_parameter(const std::string& name, Tensor value) {
  claim(name);
  value.set_requires_grad(true);
  parameters_.push_back(Parameter{name, value, {}, {}});
  return value;
}

Tensor ParameterStore::add_buffer(const std::string& name, Tensor value) {
  claim(name);
  buffers_.push_back(Buffer{name, value});
  return value;
}

const Parameter* ParameterStore::find_parameter(const std::string& name) const {
  for (const auto& p : parameters_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Buffer* ParameterStore::find_buffer(const std::string& name) const {
  for (const auto& b : buffers_) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters_) n += p.value.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : parameters_) p.value.clear_grad();
}

LayerBuilder LayerBuilder::scope(const std::string& name) const {
  return LayerBuilder(*store_, *rng_, qualified(name));
}

std::string LayerBuilder::qualified(const std::string& name) const {
  return prefix_.empty() ? name : prefix_ + "." + name;
}

Conv Conv::create(const LayerBuilder& b, const std::string& name, std::size_t in, std::size_t out,
                  std::size_t kernel, bool with_bias, Conv2dOptions options) {
  if (in == 0 || out == 0 || kernel == 0) {
    throw ConfigError("convolution " + b.qualified(name) + " needs positive channel and kernel sizes");
  }
  Conv conv;
  conv.options = options;
  Tensor w(Shape{out, in, kernel, kernel});
  const double stddev = std::sqrt(2.0 / static_cast<double>(in * kernel * kernel));
  for (Real& v : w.data()) v = static_cast<Real>(stddev * b.rng().normal());
  conv.weight = b.store().add_parameter(b.qualified(name + ".weight"), w);
  if (with_bias) conv.bias = b.store().add_parameter(b.qualified(name + ".bias"), Tensor::zeros(Shape{out}));
  return conv;
}

Conv Conv::create3x3(const LayerBuilder& b, const std::string& name, std::size_t in, std::size_t out,
                     bool with_bias, int stride, int dilation) {
  return create(b, name, in, out, 3, with_bias, Conv2dOptions{stride, dilation, dilation});
}

BatchNorm BatchNorm::create(const LayerBuilder& b, const std::string& name, std::size_t channels) {
  BatchNorm bn;
  bn.gamma = b.store().add_parameter(b.qualified(name + ".gamma"), Tensor::ones(Shape{channels}));
  bn.beta = b.store().add_parameter(b.qualified(name + ".beta"), Tensor::zeros(Shape{channels}));
  bn.state = BatchNormState::identity(channels);
  b.store().add_buffer(b.qualified(name + ".running_mean"), bn.state.running_mean);
  b.store().add_buffer(b.qualified(name + ".running_var"), bn.state.running_var);
  return bn;
}

SEGFORGE_NAMESPACE_END
