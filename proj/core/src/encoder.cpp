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

#include "mtv/encoder.hpp"

#include "mtv/errors.hpp"
#include "mtv/ops.hpp"

namespace mtv {

Tensor msa(const Tensor& x, const LayerParams& p, std::size_t num_heads) {
  const std::size_t d = x.size(-1);
  if (num_heads == 0 || d % num_heads != 0) {
    throw ConfigError("hidden size " + std::to_string(d) + " is not divisible by " + std::to_string(num_heads) +
                      " heads");
  }
  Tensor q = ops::linear(x, p.wq, p.bq);
  Tensor k = ops::linear(x, p.wk, p.bk);
  Tensor v = ops::linear(x, p.wv, p.bv);
  return ops::linear(ops::attention(q, k, v, num_heads), p.wo, p.bo);
}

Tensor attention_block(const Tensor& x, const LayerParams& p, std::size_t num_heads) {
  return ops::add(x, msa(ops::layer_norm(x, p.ln1_gamma, p.ln1_beta), p, num_heads));
}

Tensor mlp_block(const Tensor& y, const LayerParams& p) {
  Tensor h = ops::gelu(ops::linear(ops::layer_norm(y, p.ln2_gamma, p.ln2_beta), p.w1, p.b1));
  return ops::add(y, ops::linear(h, p.w2, p.b2));
}

Tensor encoder_layer(const Tensor& x, const LayerParams& p, std::size_t num_heads, bool drop) {
  if (drop) return x;
  return mlp_block(attention_block(x, p, num_heads), p);
}

Tensor to_attention_groups(const Tensor& tokens, AttentionScope scope) {
  if (tokens.dim() != 4) throw DimensionError("view tokens must be [B, n_t, S, d], got " + shape_str(tokens.shape()));
  if (scope == AttentionScope::kFactorized) return tokens;
  const auto& s = tokens.shape();
  return ops::reshape(tokens, {s[0], 1, s[1] * s[2], s[3]});
}

Tensor from_attention_groups(const Tensor& grouped, const Shape& token_shape) {
  if (grouped.shape() == token_shape) return grouped;
  return ops::reshape(grouped, token_shape);
}

Tensor view_layer(const Tensor& tokens, const LayerParams& p, const EncoderConfig& config, bool drop) {
  if (drop) return tokens;
  Tensor g = to_attention_groups(tokens, config.scope);
  return from_attention_groups(encoder_layer(g, p, config.num_heads), tokens.shape());
}

double droplayer_probability(std::size_t layer, std::size_t num_layers, double rate) {
  if (num_layers == 0) return 0.0;
  return rate * static_cast<double>(layer + 1) / static_cast<double>(num_layers);
}

std::vector<bool> droplayer_draws(std::mt19937_64& rng, std::size_t num_layers, double rate) {
  std::vector<bool> drops(num_layers, false);
  if (rate <= 0.0) return drops;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t l = 0; l < num_layers; ++l) drops[l] = u(rng) < droplayer_probability(l, num_layers, rate);
  return drops;
}

TokenSet run_view_encoder(const TokenSet& tokens, const EncoderConfig& config, const EncoderParams& params,
                          const std::vector<bool>& drops, const FusionHook& hook) {
  if (params.layers.size() != config.num_layers) {
    throw ConfigError("encoder has " + std::to_string(params.layers.size()) + " layers, config expects " +
                      std::to_string(config.num_layers));
  }
  Tensor z = tokens.tokens;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    if (hook) hook(l, z);
    const bool drop = l < drops.size() && drops[l];
    z = view_layer(z, params.layers[l], config, drop);
  }
  return {z, tokens.view_id};
}

Tensor pool_view_cls(const TokenSet& tokens) {
  const Tensor& z = tokens.tokens;
  if (z.dim() != 4) throw DimensionError("view tokens must be [B, n_t, S, d]");
  Tensor cls = ops::slice(z, 2, 0, 1);  // [B, n_t, 1, d]
  cls = ops::reshape(cls, {z.size(0), z.size(1), z.size(3)});
  return ops::mean(cls, 1);
}

}  // namespace mtv
