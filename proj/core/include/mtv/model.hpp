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
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mtv/config.hpp"
#include "mtv/encoder.hpp"
#include "mtv/fusion.hpp"
#include "mtv/gradcheck.hpp"
#include "mtv/tensor.hpp"
#include "mtv/tokenizer.hpp"

namespace mtv {

struct ViewParams {
  EmbeddingParams embed;
  EncoderParams encoder;
  Tensor to_global_w;  // [d_view, D_global]; absent for the MLP aggregator
  Tensor to_global_b;
};

struct GlobalParams {
  Tensor cls;  // [D_global]; only when the global transformer has layers
  EncoderParams encoder;
  Tensor norm_gamma, norm_beta;
  Tensor mlp_w, mlp_b;  // MLP aggregator: [sum d_view, hidden]
};

struct ModelParams {
  MTVConfig config;
  std::vector<ViewParams> views;
  FusionParams fusion;
  GlobalParams global;
  Tensor head_w;  // W^out: [width, C]
  Tensor head_b;

  /// Every trainable tensor in a fixed order, with hierarchical names.
  const std::vector<NamedTensor>& named_parameters() const { return registry; }
  std::size_t num_parameters() const;

  std::vector<NamedTensor> registry;
};

struct ParamShape {
  std::string name;
  Shape shape;
};

/// The parameter tensors build_model() would allocate, without allocating.
std::vector<ParamShape> param_layout(const MTVConfig& config);

/// Fresh parameters: truncated normal (config.init_std, cut at 2 std) for weight
/// matrices, class and bottleneck tokens; ones for norm scales; zeros for
/// biases, positional tables, CVA W^V and bottleneck projections.
ModelParams build_model(const MTVConfig& config);

/// Logits [C] for one clip [T, H, W, C], or [B, C] for [B, T, H, W, C].
/// With `training` and an `rng`, layers are dropped stochastically.
Tensor forward(const ModelParams& params, const Tensor& clip, bool training = false,
               std::mt19937_64* rng = nullptr);

/// Per-view encoder outputs (useful for inspection and tests).
std::vector<TokenSet> encode_views(const ModelParams& params, const Tensor& clip, bool training = false,
                                   std::mt19937_64* rng = nullptr);

/// Mean over crops of softmax(logits). Crops share one shape, unbatched
/// ([C] result) or batched ([B, C] result).
Tensor multi_crop_inference(const ModelParams& params, std::span<const Tensor> crops);

/// temporal x spatial crops of the model's clip size from a (possibly
/// larger) clip. Temporal crops are evenly spaced; spatial crops slide
/// along the longer spatial axis and are centred on the other one.
std::vector<Tensor> extract_crops(const Tensor& clip, const ClipShape& size, std::size_t temporal,
                                  std::size_t spatial);

}  // namespace mtv
