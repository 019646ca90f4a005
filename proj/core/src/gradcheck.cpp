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

#include "mtv/gradcheck.hpp"

#include <cmath>

#include "mtv/errors.hpp"

namespace mtv {

GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
  Tensor leaf = x.clone();
  leaf.set_requires_grad(true);
  return finite_diff_check([&] { return f(leaf); }, {NamedTensor{"x", leaf}}, step, 0);
}

GradCheckResult finite_diff_check(const std::function<Tensor()>& loss, std::vector<NamedTensor> inputs, double step,
                                  std::size_t max_coords_per_tensor) {
  for (auto& in : inputs) {
    if (!in.tensor.requires_grad()) throw ContractError("gradcheck input '" + in.name + "' does not require grad");
    in.tensor.zero_grad();
  }
  {
    TapeScope scope;
    Tensor l = loss();
    backward(l);
  }

  auto eval = [&] {
    NoGradGuard guard;
    return loss().item();
  };

  GradCheckResult result;
  for (auto& in : inputs) {
    std::vector<double> analytic(in.tensor.numel(), 0.0);
    if (in.tensor.has_grad()) {
      auto g = in.tensor.grad();
      analytic.assign(g.begin(), g.end());
    }
    const std::size_t n = in.tensor.numel();
    std::size_t stride = 1;
    if (max_coords_per_tensor > 0 && n > max_coords_per_tensor) stride = (n + max_coords_per_tensor - 1) / max_coords_per_tensor;
    auto data = in.tensor.mutable_data();
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = eval();
      data[i] = saved - step;
      const double down = eval();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::abs(analytic[i] - numeric) / (std::abs(numeric) + step);
      ++result.coordinates_checked;
      if (result.coordinates_checked == 1 || err > result.max_error) {
        result.max_error = err;
        result.worst_tensor = in.name;
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
    }
    in.tensor.zero_grad();
  }
  return result;
}

}  // namespace mtv
