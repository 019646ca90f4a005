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

#include "mtv/fusion.hpp"

#include <algorithm>

#include "mtv/errors.hpp"
#include "mtv/ops.hpp"

namespace mtv {

namespace {

bool dropped(const std::vector<std::vector<bool>>& drops, std::size_t view, std::size_t layer) {
  return view < drops.size() && layer < drops[view].size() && drops[view][layer];
}

std::size_t mapped_layer(std::size_t l, std::size_t depth, std::size_t deepest) {
  // round half up of l * depth / deepest
  const std::size_t m = (2 * l * depth + deepest) / (2 * deepest);
  return std::min(m, depth - 1);
}

}  // namespace

std::vector<std::vector<std::size_t>> fusion_schedule(std::span<const ViewSpec> views, const FusionSpec& spec) {
  std::vector<std::vector<std::size_t>> schedule;
  if (spec.method == FusionMethod::kNone || views.size() < 2 || spec.layers.empty()) return schedule;
  std::size_t deepest = 0;
  for (const auto& v : views) {
    if (v.encoder.num_layers == 0) throw ConfigError("fusion needs every view to have at least one layer");
    deepest = std::max(deepest, v.encoder.num_layers);
  }
  std::vector<std::size_t> layers = spec.layers;
  std::sort(layers.begin(), layers.end());
  for (std::size_t l : layers) {
    if (l >= deepest) throw ConfigError("fusion layer " + std::to_string(l) + " exceeds the deepest view");
    std::vector<std::size_t> row;
    for (const auto& v : views) row.push_back(mapped_layer(l, v.encoder.num_layers, deepest));
    if (!schedule.empty()) {
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] <= schedule.back()[j]) {
          throw ConfigError("fusion layers collide in view " + std::to_string(j) + " after depth mapping");
        }
      }
    }
    schedule.push_back(std::move(row));
  }
  return schedule;
}

TokenSet cva(const TokenSet& coarse, const TokenSet& fine, const CvaParams& params, std::size_t num_heads,
             CvaScope scope) {
  if (fine.view_id != coarse.view_id + 1) {
    throw ContractError("cross-view attention needs adjacent views, got " + std::to_string(coarse.view_id) +
                        " and " + std::to_string(fine.view_id));
  }
  const Tensor& zc = coarse.tokens;
  const Tensor& zf = fine.tokens;
  if (zc.dim() != 4 || zf.dim() != 4 || zc.size(0) != zf.size(0)) {
    throw DimensionError("cross-view attention needs [B, n_t, S, d] views with equal batch");
  }
  const std::size_t B = zc.size(0), ntc = zc.size(1), sc = zc.size(2), dc = zc.size(3);
  const std::size_t ntf = zf.size(1), sf = zf.size(2), df = zf.size(3);
  Tensor q_in, kv_in;
  if (scope == CvaScope::kLocal) {
    if (ntf < ntc || ntf % ntc != 0) {
      throw ConfigError("fine view has " + std::to_string(ntf) + " temporal slices, not a multiple of the coarse " +
                        std::to_string(ntc));
    }
    q_in = zc;
    kv_in = ops::reshape(zf, {B, ntc, (ntf / ntc) * sf, df});
  } else {
    q_in = ops::reshape(zc, {B, 1, ntc * sc, dc});
    kv_in = ops::reshape(zf, {B, 1, ntf * sf, df});
  }
  Tensor y = ops::linear(kv_in, params.proj, Tensor());
  Tensor q = ops::linear(q_in, params.wq, Tensor());
  Tensor k = ops::linear(y, params.wk, Tensor());
  Tensor v = ops::linear(y, params.wv, Tensor());
  Tensor out = ops::add(q_in, ops::attention(q, k, v, num_heads));
  return {from_attention_groups(out, zc.shape()), coarse.view_id};
}

std::vector<TokenSet> cva_chain(const std::vector<TokenSet>& views, std::span<const ViewSpec> specs,
                                std::span<const CvaParams> params, CvaScope scope) {
  std::vector<TokenSet> out = views;
  if (views.size() < 2) return out;
  if (params.size() + 1 != views.size()) throw ContractError("one CVA parameter set per adjacent view pair is required");
  for (std::size_t p = views.size() - 1; p-- > 0;) {
    out[p] = cva(out[p], out[p + 1], params[p], specs[p].encoder.num_heads, scope);
  }
  return out;
}

Tensor align_fine_to_coarse(const Tensor& fine, std::size_t coarse_temporal, std::size_t coarse_sequence) {
  if (fine.dim() != 4) throw DimensionError("fine tokens must be [B, n_t, S, d]");
  const std::size_t B = fine.size(0), ntf = fine.size(1), sf = fine.size(2), d = fine.size(3);
  if (coarse_temporal == 0 || ntf < coarse_temporal || ntf % coarse_temporal != 0) {
    throw ConfigError("cannot align " + std::to_string(ntf) + " fine temporal slices onto " +
                      std::to_string(coarse_temporal));
  }
  const std::size_t nsf = sf - 1;
  const std::size_t nsc = coarse_sequence - 1;
  if (coarse_sequence < 2 || nsf < nsc || nsf % nsc != 0) {
    throw ConfigError("cannot align " + std::to_string(nsf) + " fine spatial tokens onto " + std::to_string(nsc));
  }
  const std::size_t r = ntf / coarse_temporal;
  Tensor t = fine;
  if (r > 1) t = ops::mean(ops::reshape(fine, {B, coarse_temporal, r, sf, d}), 2);
  const std::size_t k = nsf / nsc;
  if (k == 1) return t;
  Tensor cls = ops::slice(t, 2, 0, 1);
  Tensor sp = ops::slice(t, 2, 1, sf);
  sp = ops::mean(ops::reshape(sp, {B, coarse_temporal, nsc, k, d}), 3);
  return ops::concat({cls, sp}, 2);
}

Tensor mlp_fuse(const Tensor& coarse_y, const Tensor& fine_y, const LayerParams& coarse, const LayerParams& fine,
                const Tensor& w_extra) {
  Tensor f = align_fine_to_coarse(ops::layer_norm(fine_y, fine.ln2_gamma, fine.ln2_beta), coarse_y.size(1),
                                  coarse_y.size(2));
  // [LN2(y), f] @ [W1; W_extra] + b1, evaluated as two products so that a
  // zero W_extra reproduces the unfused layer exactly.
  Tensor h = ops::linear(ops::layer_norm(coarse_y, coarse.ln2_gamma, coarse.ln2_beta), coarse.w1, coarse.b1);
  h = ops::add(h, ops::linear(f, w_extra, Tensor()));
  return ops::add(coarse_y, ops::linear(ops::gelu(h), coarse.w2, coarse.b2));
}

std::vector<Tensor> bottleneck_layer(const std::vector<Tensor>& x, std::span<const LayerParams* const> layers,
                                     std::span<const ViewSpec> specs, std::span<const Tensor> tokens,
                                     std::span<const Tensor> proj, const std::vector<bool>& drops) {
  const std::size_t V = x.size();
  if (layers.size() != V || specs.size() != V || (V > 1 && (tokens.size() + 1 != V || proj.size() + 1 != V))) {
    throw ContractError("bottleneck fusion needs per-view layers and per-pair tokens and projections");
  }
  std::vector<Tensor> out(V);
  Tensor inj;  // projected bottleneck tokens flowing into view j, grouped like view j
  for (std::size_t j = V; j-- > 0;) {
    const LayerParams& p = *layers[j];
    const auto& enc = specs[j].encoder;
    const bool drop = j < drops.size() && drops[j];
    Tensor xg = to_attention_groups(x[j], enc.scope);
    Tensor a = ops::layer_norm(xg, p.ln1_gamma, p.ln1_beta);
    Tensor y = drop ? xg : ops::add(xg, msa(a, p, enc.num_heads));
    if (inj.defined() && !drop) {
      Tensor q = ops::linear(a, p.wq, p.bq);
      Tensor k = ops::linear(inj, p.wk, Tensor());
      Tensor v = ops::linear(inj, p.wv, Tensor());
      y = ops::add(y, ops::linear(ops::attention(q, k, v, enc.num_heads), p.wo, Tensor()));
    }
    if (j > 0) {
      const Tensor& bt = tokens[j - 1];
      const std::size_t nb = bt.size(0);
      const std::size_t n_fine = x[j].size(1) * (x[j].size(2) - 1);
      if (nb >= n_fine) {
        throw ConfigError("bottleneck token count " + std::to_string(nb) + " must stay below the " +
                          std::to_string(n_fine) + " tokens of view " + std::to_string(j));
      }
      Tensor b = ops::expand(bt, {xg.size(0), xg.size(1)});
      Tensor bn = ops::layer_norm(b, p.ln1_gamma, p.ln1_beta);
      Tensor seq = inj.defined() ? ops::concat({a, bn, ops::layer_norm(inj, p.ln1_gamma, p.ln1_beta)}, 2)
                                 : ops::concat({a, bn}, 2);
      Tensor q = ops::linear(bn, p.wq, p.bq);
      Tensor k = ops::linear(seq, p.wk, p.bk);
      Tensor v = ops::linear(seq, p.wv, p.bv);
      Tensor updated = ops::add(b, ops::linear(ops::attention(q, k, v, enc.num_heads), p.wo, p.bo));
      Tensor projected = ops::linear(updated, proj[j - 1], Tensor());  // [B, G_j, nb, d_c]
      const std::size_t gj = xg.size(1);
      const std::size_t gc = to_attention_groups(x[j - 1], specs[j - 1].encoder.scope).size(1);
      if (gj % gc != 0) {
        throw ConfigError("bottleneck tokens of view " + std::to_string(j) + " cannot be grouped onto view " +
                          std::to_string(j - 1));
      }
      inj = ops::reshape(projected, {xg.size(0), gc, (gj / gc) * nb, projected.size(3)});
    } else {
      inj = Tensor();
    }
    Tensor z = drop ? xg : mlp_block(y, p);
    out[j] = from_attention_groups(z, x[j].shape());
  }
  return out;
}

std::vector<TokenSet> apply_fusion(const std::vector<TokenSet>& views, std::span<const ViewSpec> specs,
                                   std::span<const EncoderParams> encoders, const FusionSpec& spec,
                                   const FusionParams& params, std::size_t event,
                                   const std::vector<std::size_t>& layer_of,
                                   const std::vector<std::vector<bool>>& drops) {
  const std::size_t V = views.size();
  if (specs.size() != V || encoders.size() != V || layer_of.size() != V) {
    throw ContractError("apply_fusion needs one spec, encoder and layer index per view");
  }
  std::vector<const LayerParams*> layers(V);
  std::vector<bool> drop(V);
  for (std::size_t j = 0; j < V; ++j) {
    if (layer_of[j] >= encoders[j].layers.size()) throw ContractError("fusion layer beyond view depth");
    layers[j] = &encoders[j].layers[layer_of[j]];
    drop[j] = dropped(drops, j, layer_of[j]);
  }
  std::vector<TokenSet> out = views;
  auto plain_layers = [&](std::vector<TokenSet>& vs) {
    for (std::size_t j = 0; j < V; ++j) vs[j].tokens = view_layer(vs[j].tokens, *layers[j], specs[j].encoder, drop[j]);
  };

  if (V < 2) {
    plain_layers(out);
    return out;
  }
  switch (spec.method) {
    case FusionMethod::kNone:
      plain_layers(out);
      break;
    case FusionMethod::kCva: {
      const auto& cp = params.cva.at(event);
      for (std::size_t p = V - 1; p-- > 0;) {
        if (drop[p]) continue;
        out[p] = cva(out[p], out[p + 1], cp.at(p), specs[p].encoder.num_heads, spec.cva_scope);
      }
      plain_layers(out);
      break;
    }
    case FusionMethod::kBottleneck: {
      std::vector<Tensor> x(V);
      for (std::size_t j = 0; j < V; ++j) x[j] = views[j].tokens;
      auto z = bottleneck_layer(x, layers, specs, params.bottleneck_tokens, params.bottleneck_proj.at(event), drop);
      for (std::size_t j = 0; j < V; ++j) out[j].tokens = z[j];
      break;
    }
    case FusionMethod::kMlp: {
      std::vector<Tensor> y(V);
      for (std::size_t j = 0; j < V; ++j) {
        if (drop[j]) {
          y[j] = views[j].tokens;
          continue;
        }
        Tensor g = to_attention_groups(views[j].tokens, specs[j].encoder.scope);
        y[j] = from_attention_groups(attention_block(g, *layers[j], specs[j].encoder.num_heads), views[j].tokens.shape());
      }
      const auto& extra = params.mlp_extra.at(event);
      for (std::size_t j = 0; j < V; ++j) {
        if (drop[j]) {
          out[j].tokens = y[j];
        } else if (j + 1 < V) {
          out[j].tokens = mlp_fuse(y[j], y[j + 1], *layers[j], *layers[j + 1], extra.at(j));
        } else {
          out[j].tokens = mlp_block(y[j], *layers[j]);
        }
      }
      break;
    }
    default:
      throw ConfigError("unknown fusion method");
  }
  return out;
}

std::vector<TokenSet> run_multiview_encoder(const std::vector<TokenSet>& tokens, std::span<const ViewSpec> specs,
                                            std::span<const EncoderParams> encoders, const FusionSpec& spec,
                                            const FusionParams& params,
                                            const std::vector<std::vector<bool>>& drops) {
  const std::size_t V = tokens.size();
  if (specs.size() != V || encoders.size() != V) throw ContractError("one spec and encoder per view is required");
  const auto schedule = fusion_schedule(specs, spec);
  std::vector<TokenSet> cur = tokens;
  std::vector<std::size_t> cursor(V, 0);
  auto advance_to = [&](std::size_t j, std::size_t stop) {
    for (; cursor[j] < stop; ++cursor[j]) {
      cur[j].tokens = view_layer(cur[j].tokens, encoders[j].layers.at(cursor[j]), specs[j].encoder,
                                 dropped(drops, j, cursor[j]));
    }
  };
  for (std::size_t e = 0; e < schedule.size(); ++e) {
    for (std::size_t j = 0; j < V; ++j) advance_to(j, schedule[e][j]);
    cur = apply_fusion(cur, specs, encoders, spec, params, e, schedule[e], drops);
    for (std::size_t j = 0; j < V; ++j) cursor[j] = schedule[e][j] + 1;
  }
  for (std::size_t j = 0; j < V; ++j) {
    if (encoders[j].layers.size() != specs[j].encoder.num_layers) {
      throw ConfigError("view " + std::to_string(j) + " encoder depth does not match its config");
    }
    advance_to(j, specs[j].encoder.num_layers);
  }
  return cur;
}

}  // namespace mtv
