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
#include <span>
#include <vector>

#include "mtv/config.hpp"
#include "mtv/tensor.hpp"

namespace mtv {

struct TokenCount {
  std::size_t temporal = 0;  // n_t
  std::size_t spatial = 0;   // n_s
  std::size_t total = 0;     // N = n_t * n_s

  bool operator==(const TokenCount&) const = default;
};

/// Floor-tiling token counts. A tubelet larger than the clip yields zeros.
TokenCount count_tokens(const ClipShape& clip, const TubeletSpec& spec);

/// Per-view token array. `tokens` is [B, n_t, n_s + 1, d]: one class token
/// (slot 0) per temporal index, followed by the spatial tokens in raster
/// order. A single clip is carried as B = 1.
struct TokenSet {
  Tensor tokens;
  std::size_t view_id = 0;

  std::size_t batch() const { return tokens.size(0); }
  std::size_t temporal() const { return tokens.size(1); }
  std::size_t sequence() const { return tokens.size(2); }
  std::size_t hidden() const { return tokens.size(3); }
};

struct EmbeddingParams {
  Tensor proj;  // E: [t*h*w*C, d]
  Tensor bias;  // [d]
  Tensor pos;   // p: [n_t, n_s + 1, d]
  Tensor cls;   // z_cls: [d]
};

/// Cuts [T, H, W, C] (or [B, T, H, W, C]) into non-overlapping tubelets,
/// dropping remainder frames and pixels. Result: [(B,) n_t, n_s, t*h*w*C],
/// each tubelet flattened in (dt, dh, dw, c) order.
Tensor extract_tubelets(const Tensor& clip, const TubeletSpec& spec);

/// z = [z_cls, E x_1 + b, ...] + p for every temporal index.
TokenSet tokenize_view(const Tensor& clip, const ViewSpec& view, const EmbeddingParams& params,
                       std::size_t view_id = 0);

/// One TokenSet per view; views must be ordered by increasing token count.
std::vector<TokenSet> tokenize_multiview(const Tensor& clip, std::span<const ViewSpec> views,
                                         std::span<const EmbeddingParams> params);

}  // namespace mtv
