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

#include <span>
#include <vector>

#include "mtv/tensor.hpp"

// Differentiable tensor operations. Every op registers its backward rule on
// the active tape when one of its inputs requires a gradient.
//
// Broadcasting is restricted to leading dimensions: a binary op accepts two
// equal shapes, or a second operand whose shape is a suffix of the first.

namespace mtv::ops {

/// [.., m, k] @ [.., k, n]. The right operand may also be a plain 2-D matrix
/// shared across all leading (batch) dimensions of the left one.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Sum / mean over every element, returned as a one-element tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean over one axis; the axis is removed from the result.
Tensor mean(const Tensor& a, int axis);

/// Numerically stabilised (max-subtracted) softmax along `axis`.
Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

/// Normalises over the last axis; gamma / beta have the last axis' extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

/// Exact x * Phi(x).
Tensor gelu(const Tensor& x);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
/// Elements [begin, end) along `axis`.
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
/// Swaps two axes.
Tensor transpose(const Tensor& x, int axis_a, int axis_b);
/// Repeats `x` over new leading dimensions: result shape = leading ++ x.shape.
Tensor expand(const Tensor& x, const Shape& leading);

/// x @ w + b over the last axis of x. `b` may be undefined (no bias).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Mean cross-entropy of `logits` [batch, classes] against integer labels,
/// with the target distribution (1 - smoothing) * onehot + smoothing / classes.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, double smoothing = 0.0);

/// Multi-head scaled dot-product attention.
///   q: [.., Sq, D]   k: [.., Sk, D]   v: [.., Sk, Dv]   ->   [.., Sq, Dv]
/// Leading dimensions of q, k, v must agree. D and Dv are split into
/// `num_heads` equal chunks; scores are scaled by 1/sqrt(D / num_heads).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t num_heads);

/// Attention probabilities [.., heads, Sq, Sk] for inspection (no tape).
Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t num_heads);

/// Throws NumericError when `x` holds a NaN or infinity.
void check_finite(const Tensor& x, const char* what);

}  // namespace mtv::ops
