#include "segforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "segforge/error.hpp"

SEGFORGE_NAMESPACE_BEGIN

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
  if (dims.size() > kMaxRank) {
    throw ContractError("tensor rank " + std::to_string(dims.size()) + " exceeds 4");
  }
  std::copy(dims.begin(), dims.end(), dims_.begin());
  rank_ = dims.size();
}

std::size_t Shape::operator[](std::size_t i) const {
  if (i >= rank_) throw ContractError("shape index out of range for " + str());
  return dims_[i];
}

std::size_t Shape::numel() const noexcept {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

bool Shape::operator==(const Shape& other) const noexcept {
  return rank_ == other.rank_ && std::equal(dims_.begin(), dims_.begin() + rank_, other.dims_.begin());
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < rank_; ++i) os << (i ? "," : "") << dims_[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Real fill) : impl_(std::make_shared<TensorImpl>()) {
  impl_->shape = shape;
  impl_->data.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : impl_(std::make_shared<TensorImpl>()) {
  if (values.size() != shape.numel()) {
    throw ContractError("tensor of shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
                        " values, got " + std::to_string(values.size()));
  }
  impl_->shape = shape;
  impl_->data = std::move(values);
}

TensorImpl& Tensor::impl() {
  if (!impl_) throw ContractError("use of undefined tensor");
  return *impl_;
}

const TensorImpl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return *impl_;
}

Real Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape().str());
  return impl().data[0];
}

Real& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  const Shape& s = shape();
  return impl().data[((n * s[1] + c) * s[2] + h) * s[3] + w];
}

Real Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  const Shape& s = shape();
  return impl().data[((n * s[1] + c) * s[2] + h) * s[3] + w];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl().requires_grad = on;
  return *this;
}

std::span<Real> Tensor::mutable_grad() {
  auto& i = impl();
  if (i.grad.empty()) i.grad.assign(i.data.size(), Real{0});
  return i.grad;
}

void Tensor::zero_grad() {
  auto& g = impl().grad;
  std::fill(g.begin(), g.end(), Real{0});
}

void Tensor::clear_grad() {
  impl().grad.clear();
  impl().grad.shrink_to_fit();
}

Tensor Tensor::clone() const { return Tensor(shape(), impl().data); }

Tensor Tensor::reshape(Shape s) const {
  if (s.numel() != numel()) {
    throw ContractError("cannot reshape " + shape().str() + " to " + s.str());
  }
  return Tensor(s, impl().data);
}

// ---------------------------------------------------------------------------

namespace {

thread_local Tape t_tape;
thread_local bool t_grad_enabled = true;

#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif

}  // namespace

Tape& tape() { return t_tape; }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void Tape::record(TapeNode node) { nodes_.push_back(std::move(node)); }

void Tape::backward(const Tensor& loss) {
  if (loss.rank() != 0) {
    throw ContractError("backward() needs a scalar loss, got shape " + loss.shape().str());
  }
  if (nodes_.empty()) {
    throw ContractError("backward() called with an empty tape");
  }
  Tensor seed = loss;
  auto g = seed.mutable_grad();
  g[0] = Real{1};

  // Clear even if a backward rule throws.
  struct Clear {
    Tape* tape;
    ~Clear() { tape->clear(); }
  } clear{this};

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // no gradient reached this node
    it->backward(it->output.grad());
  }
}

void backward(const Tensor& loss) { tape().backward(loss); }

bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks(bool on) { g_finite_checks = on; }

void check_finite(const Tensor& t, const char* op) {
  if (!g_finite_checks) return;
  for (Real v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("non-finite value produced by ") + op);
    }
  }
}

namespace detail {

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (!t_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void record(const char* op, std::vector<Tensor> inputs, const Tensor& out,
            std::function<void(std::span<const Real>)> backward) {
  Tensor output = out;
  output.set_requires_grad(true);
  tape().record(TapeNode{op, std::move(inputs), output, std::move(backward)});
}

void accumulate_grad(const Tensor& t, std::span<const Real> src) {
  if (!t.defined() || !t.requires_grad()) return;
  Tensor handle = t;
  auto dst = handle.mutable_grad();
  if (dst.size() != src.size()) throw ContractError("gradient size mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

SEGFORGE_NAMESPACE_END
