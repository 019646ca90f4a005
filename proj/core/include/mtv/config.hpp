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
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mtv {

/// T x H x W x C extents of one input clip.
struct ClipShape {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  bool operator==(const ClipShape&) const = default;
};

/// Extents of one non-overlapping spatio-temporal tubelet.
struct TubeletSpec {
  std::size_t t = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  bool operator==(const TubeletSpec&) const = default;
};

enum class AttentionScope {
  kFactorized,    // self-attention among tokens of one temporal index
  kUnfactorized,  // self-attention over all spatio-temporal tokens of a view
};

struct EncoderConfig {
  std::size_t num_layers = 0;
  std::size_t hidden = 0;
  std::size_t mlp_dim = 0;
  std::size_t num_heads = 1;
  AttentionScope scope = AttentionScope::kFactorized;
  double droplayer_rate = 0.0;

  std::size_t head_dim() const { return hidden / num_heads; }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Standard backbones: "tiny", "small", "base", "large", "huge".
EncoderConfig encoder_preset(std::string_view name);

/// One view: a tubelet geometry plus the encoder that processes its tokens.
struct ViewSpec {
  TubeletSpec tubelet;
  EncoderConfig encoder;

  bool operator==(const ViewSpec&) const = default;
};

enum class FusionMethod { kNone, kCva, kBottleneck, kMlp };

/// Temporal extent of cross-view attention: keys restricted to the fine
/// slices covering the same time span (local), or all fine tokens (global).
enum class CvaScope { kLocal, kGlobal };

struct FusionSpec {
  FusionMethod method = FusionMethod::kNone;
  /// Layer indices of the deepest view; shallower views fuse at
  /// round(l * L_view / L_deepest), clamped to their last layer.
  std::vector<std::size_t> layers;
  std::size_t bottleneck_tokens = 1;
  CvaScope cva_scope = CvaScope::kLocal;

  bool operator==(const FusionSpec&) const = default;
};

enum class AggregatorKind { kTransformer, kMlp };

struct GlobalSpec {
  AggregatorKind kind = AggregatorKind::kTransformer;
  std::size_t num_layers = 1;
  std::size_t hidden = 768;
  std::size_t mlp_dim = 3072;
  std::size_t num_heads = 8;

  bool operator==(const GlobalSpec&) const = default;
};

/// Full model description. Views are ordered by increasing token count.
struct MTVConfig {
  ClipShape clip;
  std::vector<ViewSpec> views;
  FusionSpec fusion;
  GlobalSpec global;
  std::size_t num_classes = 0;
  /// Standard deviation of the truncated-normal weight init.
  double init_std = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const MTVConfig&) const = default;
};

std::string to_string(AttentionScope scope);
std::string to_string(FusionMethod method);
std::string to_string(CvaScope scope);
std::string to_string(AggregatorKind kind);
FusionMethod parse_fusion_method(std::string_view name);

/// Canonical JSON text of a model config (used in checkpoints and resolved
/// run configs). Parsing rejects unknown keys.
std::string model_config_to_json(const MTVConfig& config, int indent = 2);
MTVConfig model_config_from_json(std::string_view text);

}  // namespace mtv
