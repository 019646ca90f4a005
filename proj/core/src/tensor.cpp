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

#include "mtv/tensor.hpp"

#include <sstream>

#include "mtv/errors.hpp"

namespace mtv {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Buffer& TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

namespace {

void check_shape(const Shape& shape) {
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

std::shared_ptr<TensorImpl> make_impl(Shape shape, Buffer data, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return impl;
}

const TensorImpl& deref(const std::shared_ptr<TensorImpl>& impl) {
  if (!impl) throw ContractError("use of an undefined tensor");
  return *impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), Buffer(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), Buffer(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, Buffer data, bool requires_grad) {
  return Tensor(make_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::span<const double> data, bool requires_grad) {
  return Tensor(make_impl(std::move(shape), Buffer(data.begin(), data.end()), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::initializer_list<double> data, bool requires_grad) {
  return Tensor(make_impl(std::move(shape), Buffer(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_impl({1}, Buffer{value}, requires_grad));
}

const Shape& Tensor::shape() const { return deref(impl_).shape; }

std::size_t Tensor::size(int axis) const {
  const auto& s = shape();
  int rank = static_cast<int>(s.size());
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return deref(impl_).data.size(); }

std::span<const double> Tensor::data() const { return deref(impl_).data; }

std::span<double> Tensor::mutable_data() {
  deref(impl_);
  return impl_->data;
}

bool Tensor::requires_grad() const { return deref(impl_).requires_grad; }

void Tensor::set_requires_grad(bool value) {
  deref(impl_);
  impl_->requires_grad = value;
}

bool Tensor::has_grad() const { return !deref(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const { return deref(impl_).grad; }

std::span<double> Tensor::mutable_grad() {
  deref(impl_);
  return impl_->ensure_grad();
}

void Tensor::zero_grad() {
  deref(impl_);
  impl_->grad.clear();
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch for " + shape_str(s));
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range for " + shape_str(s));
    offset = offset * s[axis] + i;
    ++axis;
  }
  return impl_->data[offset];
}

Tensor Tensor::clone() const {
  const auto& impl = deref(impl_);
  return Tensor(make_impl(impl.shape, impl.data, false));
}

// ---------------------------------------------------------------------------

namespace {
thread_local bool g_grad_enabled = true;
}

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(std::shared_ptr<TensorImpl> output, BackwardFn fn) {
  nodes_.push_back(Node{std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    clear();
    throw ContractError("backward() on a loss that is not connected to any parameter");
  }
  loss.impl()->ensure_grad()[0] += 1.0;
  // Nodes were recorded in creation order, so reverse order is a valid
  // reverse topological order.
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(it->output->grad);
  }
  clear();
}

void Tape::clear() { nodes_.clear(); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& loss) { Tape::active().backward(loss); }

namespace detail {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void record(Tensor& out, std::initializer_list<const Tensor*> inputs, Tape::BackwardFn fn) {
  if (!any_requires_grad(inputs)) return;
  out.set_requires_grad(true);
  Tape::active().record(out.impl(), std::move(fn));
}

void record_if(Tensor& out, bool needed, Tape::BackwardFn fn) {
  if (!needed || !g_grad_enabled) return;
  out.set_requires_grad(true);
  Tape::active().record(out.impl(), std::move(fn));
}

}  // namespace detail

}  // namespace mtv
