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
#include "mtv/encoder.hpp"
#include "mtv/tensor.hpp"
#include "mtv/tokenizer.hpp"

// Cross-view fusion. Adjacent views (i, i + 1) form pair i; view i is the
// coarser one (fewer tokens). Every fusion layer of the schedule is an
// "event"; per-event weights are indexed [event][pair].

namespace mtv {

/// z_c += Attn(z_c W^Q, (z_f W^proj) W^K, (z_f W^proj) W^V). All maps are
/// bias-free; W^V is the zero-initialised path.
struct CvaParams {
  Tensor proj;  // [d_fine, d_coarse]
  Tensor wq;    // [d_coarse, d_coarse]
  Tensor wk;
  Tensor wv;
};

struct FusionParams {
  std::vector<std::vector<CvaParams>> cva;
  /// Learned bottleneck tokens of the finer view of each pair, [B, d_fine].
  std::vector<Tensor> bottleneck_tokens;
  /// Projection of updated bottleneck tokens into the coarse width, [d_fine, d_coarse].
  std::vector<std::vector<Tensor>> bottleneck_proj;
  /// Extra first-layer MLP rows that read the aligned fine features, [d_fine, mlp_coarse].
  std::vector<std::vector<Tensor>> mlp_extra;
};

/// Layer index of every view at which each fusion event fires:
/// result[event][view] = min(L_view - 1, round(l * L_view / L_deepest)).
std::vector<std::vector<std::size_t>> fusion_schedule(std::span<const ViewSpec> views, const FusionSpec& spec);

/// Cross-view attention of `coarse` (view i) onto `fine` (view i + 1).
TokenSet cva(const TokenSet& coarse, const TokenSet& fine, const CvaParams& params, std::size_t num_heads,
             CvaScope scope = CvaScope::kLocal);

/// Applies cva to every adjacent pair, finest pair first.
std::vector<TokenSet> cva_chain(const std::vector<TokenSet>& views, std::span<const ViewSpec> specs,
                                std::span<const CvaParams> params, CvaScope scope);

/// Average-pools fine tokens [B, n_tf, S_f, d] onto the coarse layout
/// [B, n_tc, S_c, *]: temporal groups of n_tf / n_tc slices, then contiguous
/// groups of n_s^f / n_s^c spatial tokens; the cls slot pools with cls.
Tensor align_fine_to_coarse(const Tensor& fine, std::size_t coarse_temporal, std::size_t coarse_sequence);

/// MLP half of a coarse layer whose first linear map also reads the aligned
/// fine features: y + W2 GeLU([LN2(y), f] [W1; W_extra] + b1) + b2, with
/// f = align(LN2_fine(y_fine)).
Tensor mlp_fuse(const Tensor& coarse_y, const Tensor& fine_y, const LayerParams& coarse,
                const LayerParams& fine, const Tensor& w_extra);

/// One full layer of every view with bottleneck exchange, finest view
/// first. `x[j]` is [B, n_t, S, d]; `layers[j]` the layer weights of view j.
std::vector<Tensor> bottleneck_layer(const std::vector<Tensor>& x, std::span<const LayerParams* const> layers,
                                     std::span<const ViewSpec> specs, std::span<const Tensor> tokens,
                                     std::span<const Tensor> proj, const std::vector<bool>& drops);

/// Runs the fusion layer of event `event` for all views: the method's
/// exchange plus the layer itself. `layer_of[j]` is view j's layer index.
std::vector<TokenSet> apply_fusion(const std::vector<TokenSet>& views, std::span<const ViewSpec> specs,
                                   std::span<const EncoderParams> encoders, const FusionSpec& spec,
                                   const FusionParams& params, std::size_t event,
                                   const std::vector<std::size_t>& layer_of,
                                   const std::vector<std::vector<bool>>& drops = {});

/// All view encoders with fusion interleaved. `drops[j]` may be empty.
std::vector<TokenSet> run_multiview_encoder(const std::vector<TokenSet>& tokens, std::span<const ViewSpec> specs,
                                            std::span<const EncoderParams> encoders, const FusionSpec& spec,
                                            const FusionParams& params,
                                            const std::vector<std::vector<bool>>& drops = {});

}  // namespace mtv
