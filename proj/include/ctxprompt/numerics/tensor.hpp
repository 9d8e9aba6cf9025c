// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors and the tape that records operations for a single
// reverse sweep.
//
// A Tensor is a shared handle: copying it aliases the same storage. Values
// produced by ops are never mutated afterwards; only parameters (leaf tensors)
// have their data rewritten, by the optimizer or by finite-difference probes.
//
// Recording is opt-in. Ops record onto the tape installed by a TapeScope on
// the calling thread, and only when at least one input requires a gradient.
// With no active tape everything runs in inference mode.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctxprompt {

#ifdef CTXPROMPT_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), Real{0});
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<Real> data, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const Real> data() const;
  // Parameters only: optimizers and gradient probes write through this.
  std::span<Real> mutable_data();
  Real item() const;
  Real operator[](std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad();
  void zero_grad();
  void clear_grad();

  // Detached deep copy.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// ComputationRecord: operations in execution order, which is a topological
// order of the graph. backward() walks it once in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward closure in
  // reverse order. A second call without reset() throws StateError.
  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }
  std::vector<std::string_view> op_names() const;
  // Op names in the order the last backward() visited them.
  const std::vector<std::string_view>& visit_order() const { return visited_; }

  void record(std::string_view op, std::shared_ptr<detail::TensorImpl> output,
              std::function<void()> backward_fn);

  static Tape* active();

 private:
  friend class TapeScope;

  struct Record {
    std::string_view op;
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void()> backward_fn;
  };

  std::vector<Record> records_;
  std::vector<std::string_view> visited_;
  bool consumed_ = false;
};

// Installs a tape as the recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

// Suspends recording on the current thread (inference inside a training step).
class NoGradScope {
 public:
  NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;
  ~NoGradScope();

 private:
  Tape* previous_;
};

void backward(Tape& tape, const Tensor& loss);

}  // namespace ctxprompt
