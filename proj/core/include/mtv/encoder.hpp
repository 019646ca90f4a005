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
#include <random>
#include <vector>

#include "mtv/config.hpp"
#include "mtv/tensor.hpp"
#include "mtv/tokenizer.hpp"

namespace mtv {

/// Weights of one pre-norm transformer layer. Linear maps are stored
/// [in, out] and applied as x @ W + b.
struct LayerParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1, w2, b2;
};

struct EncoderParams {
  std::vector<LayerParams> layers;
};

/// Multi-head self-attention over the second-to-last axis of x [.., n, d];
/// every leading index is an independent sequence.
Tensor msa(const Tensor& x, const LayerParams& p, std::size_t num_heads);

/// y = x + MSA(LN1(x))
Tensor attention_block(const Tensor& x, const LayerParams& p, std::size_t num_heads);

/// out = y + W2 GeLU(LN2(y) W1 + b1) + b2
Tensor mlp_block(const Tensor& y, const LayerParams& p);

/// Both halves of one layer. A dropped layer returns `x` unchanged.
Tensor encoder_layer(const Tensor& x, const LayerParams& p, std::size_t num_heads, bool drop = false);

/// Reshapes [B, n_t, S, d] so that attention runs per temporal index
/// (factorized) or over the whole view (unfactorized, [B, 1, n_t*S, d]).
Tensor to_attention_groups(const Tensor& tokens, AttentionScope scope);
Tensor from_attention_groups(const Tensor& grouped, const Shape& token_shape);

/// Applies layer `p` to a view laid out [B, n_t, S, d] under `scope`.
Tensor view_layer(const Tensor& tokens, const LayerParams& p, const EncoderConfig& config, bool drop = false);

/// Drop probability of layer `layer` (0-based): rate * (layer + 1) / num_layers.
double droplayer_probability(std::size_t layer, std::size_t num_layers, double rate);

/// Per-layer Bernoulli drop decisions (true = skip the layer).
std::vector<bool> droplayer_draws(std::mt19937_64& rng, std::size_t num_layers, double rate);

/// Called before layer `layer` runs; may replace the tokens.
using FusionHook = std::function<void(std::size_t layer, Tensor& tokens)>;

/// Runs every layer of one view encoder. `drops` may be empty (no droplayer).
TokenSet run_view_encoder(const TokenSet& tokens, const EncoderConfig& config, const EncoderParams& params,
                          const std::vector<bool>& drops = {}, const FusionHook& hook = {});

/// View-level class token [B, d]: mean of the per-temporal-index cls tokens.
Tensor pool_view_cls(const TokenSet& tokens);

}  // namespace mtv
