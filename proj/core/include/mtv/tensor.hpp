/*
 * Copyright (C) 2026 The mtv-cpp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace mtv {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned allocator. Vectorised kernels choose between scalar
/// and packet paths by address, so a fixed alignment keeps results
/// independent of where the allocator happens to place a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

/// Storage of tensor values and gradients.
using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Storage shared by every handle to one tensor. `grad` stays empty until a
/// backward pass first accumulates into it.
struct TensorImpl {
  Shape shape;
  Buffer data;
  Buffer grad;
  bool requires_grad = false;

  Buffer& ensure_grad();
};

/// Dense row-major double tensor with reference semantics (copies share
/// storage, like a framework tensor handle).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, Buffer data, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::span<const double> data, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::initializer_list<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  /// Extent of `axis`; negative values count from the back.
  std::size_t size(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Direct write access. Only legal outside of a recorded forward pass
  /// (parameter initialisation, optimiser updates).
  std::span<double> mutable_data();

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  /// Deep copy of the values, detached from any tape.
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Thread-local record of the operations of one forward pass. Replaying it
/// in reverse accumulates gradients into every tensor that requires them;
/// the tape is cleared afterwards.
class Tape {
 public:
  using BackwardFn = std::function<void(const Buffer& out_grad)>;

  static Tape& active();

  void record(std::shared_ptr<TensorImpl> output, BackwardFn fn);
  void backward(const Tensor& loss);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

bool grad_enabled();

/// Disables recording for the lifetime of the guard (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Clears the active tape on scope exit, so a forward pass that never reaches
/// backward() does not keep its intermediates alive.
class TapeScope {
 public:
  TapeScope() = default;
  ~TapeScope() { Tape::active().clear(); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

/// d(loss)/d(leaf) for every leaf reachable from `loss`. `loss` must be a
/// one-element tensor produced on the active tape.
void backward(const Tensor& loss);

namespace detail {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs);

/// Marks `out` as differentiable and records `fn` when any input needs grads.
void record(Tensor& out, std::initializer_list<const Tensor*> inputs, Tape::BackwardFn fn);

/// Same as record() for a caller-computed `needed` flag (variadic inputs).
void record_if(Tensor& out, bool needed, Tape::BackwardFn fn);

}  // namespace detail

}  // namespace mtv
