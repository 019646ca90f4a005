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
#include <string>
#include <vector>

#include "mtv/tensor.hpp"

namespace mtv {

struct GradCheckResult {
  /// max over checked coordinates of |autodiff - central| / (|central| + step)
  double max_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Compares reverse-mode gradients of the scalar `f(x)` with central
/// differences of half-width `step`, over every coordinate of `x`.
GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double step = 1e-5);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Multi-input variant: `loss()` closes over the tensors in `inputs`, whose
/// storage is perturbed in place. At most `max_coords_per_tensor` evenly
/// spaced coordinates are probed per tensor (0 = all).
GradCheckResult finite_diff_check(const std::function<Tensor()>& loss, std::vector<NamedTensor> inputs,
                                  double step = 1e-5, std::size_t max_coords_per_tensor = 0);

}  // namespace mtv
