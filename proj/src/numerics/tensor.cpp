// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctxprompt/errors.hpp"

namespace ctxprompt {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), Real{0}, requires_grad); }

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<Real> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Real value, bool requires_grad) { return full(Shape{}, value, requires_grad); }

const Shape& Tensor::shape() const {
  if (!impl_) throw StateError("use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const Real> Tensor::data() const {
  if (!impl_) throw StateError("use of undefined tensor");
  return impl_->data;
}

std::span<Real> Tensor::mutable_data() {
  if (!impl_) throw StateError("use of undefined tensor");
  return impl_->data;
}

Real Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!impl_) throw StateError("use of undefined tensor");
  impl_->requires_grad = value;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const Real> Tensor::grad() const {
  if (!impl_) throw StateError("use of undefined tensor");
  return impl_->grad;
}

std::span<Real> Tensor::mutable_grad() {
  if (!impl_) throw StateError("use of undefined tensor");
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), Real{0});
}

void Tensor::clear_grad() {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

Tensor Tensor::clone() const {
  if (!impl_) return {};
  return from_data(impl_->shape, impl_->data, impl_->requires_grad);
}

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

void Tape::record(std::string_view op, std::shared_ptr<detail::TensorImpl> output,
                  std::function<void()> backward_fn) {
  if (consumed_) throw StateError("recording onto a tape that already ran backward; call reset()");
  records_.push_back(Record{op, std::move(output), std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw StateError("backward called twice on the same tape without reset()");
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward requires a scalar loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) throw StateError("loss does not depend on any tensor that requires a gradient");
  consumed_ = true;
  visited_.clear();
  visited_.reserve(records_.size());
  auto& seed = loss.impl()->grad;
  seed.assign(1, Real{1});
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    visited_.push_back(it->op);
    // Outputs that do not reach the loss still propagate (zero) gradients so
    // that every recorded input ends up with a populated accumulator.
    it->output->ensure_grad();
    it->backward_fn();
  }
  // Release intermediate graph state; parameters keep their gradients.
  for (auto& r : records_) r.backward_fn = nullptr;
}

void Tape::reset() {
  records_.clear();
  visited_.clear();
  consumed_ = false;
}

std::vector<std::string_view> Tape::op_names() const {
  std::vector<std::string_view> names;
  names.reserve(records_.size());
  for (const auto& r : records_) names.push_back(r.op);
  return names;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

}  // namespace ctxprompt
