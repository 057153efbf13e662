#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "segforge/precision.hpp"

SEGFORGE_NAMESPACE_BEGIN

/// Extents of a tensor, rank 0 (scalar) through 4 (N, C, H, W).
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::span<const std::size_t> dims);

  std::size_t rank() const noexcept { return rank_; }
  std::size_t operator[](std::size_t i) const;
  std::size_t numel() const noexcept;
  std::span<const std::size_t> dims() const noexcept { return {dims_.data(), rank_}; }

  bool operator==(const Shape& other) const noexcept;

  std::string str() const;

 private:
  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

/// Dense row-major array with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage. Use clone() for an
/// independent copy. A default-constructed Tensor is undefined (no storage) and
/// is used to mean "absent", e.g. a convolution without bias.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real{0});
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor ones(Shape shape) { return Tensor(shape, Real{1}); }
  static Tensor full(Shape shape, Real value) { return Tensor(shape, value); }
  static Tensor scalar(Real value) { return Tensor(Shape{}, value); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl().shape; }
  std::size_t rank() const { return shape().rank(); }
  std::size_t dim(std::size_t i) const { return shape()[i]; }
  std::size_t numel() const { return impl().data.size(); }

  std::span<Real> data() { return impl().data; }
  std::span<const Real> data() const { return impl().data; }
  std::vector<Real> to_vector() const { return impl().data; }

  Real item() const;

  /// Element access for rank-4 tensors.
  Real& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  Real at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  bool requires_grad() const { return impl().requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const { return !impl().grad.empty(); }
  /// Gradient buffer; empty span when no gradient has been accumulated.
  std::span<const Real> grad() const { return impl().grad; }
  std::span<Real> mutable_grad();  // allocates a zero buffer on first use
  void zero_grad();
  void clear_grad();

  Tensor clone() const;  // deep copy of values, detached from the graph
  Tensor detach() const { return clone(); }
  Tensor reshape(Shape shape) const;  // copy with new extents, same element count

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  TensorImpl& impl();
  const TensorImpl& impl() const;

  std::shared_ptr<TensorImpl> impl_;
};

/// One recorded operation: its output and how to push an output gradient back
/// into the inputs.
struct TapeNode {
  const char* op = "";
  std::vector<Tensor> inputs;
  Tensor output;
  std::function<void(std::span<const Real> grad_out)> backward;
};

/// Dynamically recorded computation graph.
///
/// Nodes are appended in execution order, which is a topological order. A Tape
/// belongs to one thread; tape() returns the calling thread's instance.
class Tape {
 public:
  void record(TapeNode node);
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  const std::vector<TapeNode>& nodes() const noexcept { return nodes_; }
  void clear() { nodes_.clear(); }

  /// Reverse sweep from a scalar loss. Gradients accumulate into every tensor
  /// that requires them; the tape is cleared afterwards.
  void backward(const Tensor& loss);

 private:
  std::vector<TapeNode> nodes_;
};

Tape& tape();

/// Convenience for tape().backward(loss).
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Output scans for NaN/Inf. Enabled by default in builds without NDEBUG; test
/// binaries switch it on explicitly.
bool finite_checks_enabled();
void set_finite_checks(bool on);
void check_finite(const Tensor& t, const char* op);

namespace detail {

/// True when an op over these inputs has to be recorded.
bool needs_grad(std::initializer_list<const Tensor*> inputs);

/// Marks out as requiring grad and appends a node.
void record(const char* op, std::vector<Tensor> inputs, const Tensor& out,
            std::function<void(std::span<const Real>)> backward);

/// Adds src into t's gradient buffer if t requires grad.
void accumulate_grad(const Tensor& t, std::span<const Real> src);

}  // namespace detail

SEGFORGE_NAMESPACE_END
