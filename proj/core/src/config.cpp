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

#include "mtv/config.hpp"

#include <algorithm>
#include <set>

#include "json_util.hpp"
#include "mtv/errors.hpp"

namespace mtv {

void EncoderConfig::validate() const {
  if (hidden == 0 || mlp_dim == 0 || num_heads == 0) throw ConfigError("encoder hidden, mlp_dim and num_heads must be positive");
  if (hidden % num_heads != 0) {
    throw ConfigError("encoder hidden size " + std::to_string(hidden) + " is not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  if (!(droplayer_rate >= 0.0 && droplayer_rate < 1.0)) throw ConfigError("droplayer_rate must lie in [0, 1)");
}

EncoderConfig encoder_preset(std::string_view name) {
  // hidden / mlp / heads / layers
  if (name == "tiny" || name == "Ti") return {12, 192, 768, 3};
  if (name == "small" || name == "S") return {12, 384, 1536, 6};
  if (name == "base" || name == "B") return {12, 768, 3072, 12};
  if (name == "large" || name == "L") return {24, 1024, 4096, 16};
  if (name == "huge" || name == "H") return {32, 1280, 5120, 16};
  throw ConfigError("unknown encoder preset '" + std::string(name) + "'");
}

void MTVConfig::validate() const {
  if (clip.frames == 0 || clip.height == 0 || clip.width == 0 || clip.channels == 0) {
    throw ConfigError("clip extents must be positive");
  }
  if (views.empty()) throw ConfigError("a model needs at least one view");
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  if (!(init_std >= 0.0)) throw ConfigError("init_std must be non-negative");
  std::size_t prev_tokens = 0;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    const auto& tb = v.tubelet;
    if (tb.t == 0 || tb.h == 0 || tb.w == 0) throw ConfigError("view " + std::to_string(i) + ": tubelet extents must be positive");
    if (tb.t > clip.frames || tb.h > clip.height || tb.w > clip.width) {
      throw ConfigError("view " + std::to_string(i) + ": tubelet exceeds the clip");
    }
    v.encoder.validate();
    const std::size_t n = (clip.frames / tb.t) * (clip.height / tb.h) * (clip.width / tb.w);
    if (n < prev_tokens) throw ConfigError("views must be ordered by increasing token count");
    prev_tokens = n;
  }

  if (global.kind == AggregatorKind::kTransformer) {
    if (global.hidden == 0 || global.num_heads == 0 || global.hidden % global.num_heads != 0) {
      throw ConfigError("global encoder hidden size must be a positive multiple of its head count");
    }
    if (global.num_layers > 0 && global.mlp_dim == 0) throw ConfigError("global encoder mlp_dim must be positive");
  } else if (global.mlp_dim == 0) {
    throw ConfigError("MLP aggregator hidden size (mlp_dim) must be positive");
  }

  if (fusion.method != FusionMethod::kNone && views.size() > 1) {
    std::size_t deepest = 0;
    for (const auto& v : views) {
      if (v.encoder.num_layers == 0) throw ConfigError("fusion needs every view to have at least one layer");
      deepest = std::max(deepest, v.encoder.num_layers);
    }
    std::set<std::size_t> seen;
    for (std::size_t l : fusion.layers) {
      if (l >= deepest) throw ConfigError("fusion layer " + std::to_string(l) + " exceeds the deepest view");
      if (!seen.insert(l).second) throw ConfigError("duplicate fusion layer " + std::to_string(l));
    }
    if (fusion.method == FusionMethod::kBottleneck && fusion.bottleneck_tokens == 0) {
      throw ConfigError("bottleneck fusion needs at least one bottleneck token");
    }
  }
}

std::string to_string(AttentionScope scope) {
  return scope == AttentionScope::kFactorized ? "factorized" : "unfactorized";
}

std::string to_string(FusionMethod method) {
  switch (method) {
    case FusionMethod::kNone: return "none";
    case FusionMethod::kCva: return "cva";
    case FusionMethod::kBottleneck: return "bottleneck";
    case FusionMethod::kMlp: return "mlp";
  }
  return "none";
}

std::string to_string(CvaScope scope) { return scope == CvaScope::kLocal ? "local" : "global"; }

std::string to_string(AggregatorKind kind) { return kind == AggregatorKind::kTransformer ? "transformer" : "mlp"; }

FusionMethod parse_fusion_method(std::string_view name) {
  if (name == "none") return FusionMethod::kNone;
  if (name == "cva") return FusionMethod::kCva;
  if (name == "bottleneck") return FusionMethod::kBottleneck;
  if (name == "mlp") return FusionMethod::kMlp;
  throw ConfigError("unknown fusion method '" + std::string(name) + "'");
}

namespace detail {

namespace {

AttentionScope parse_scope(const std::string& s) {
  if (s == "factorized") return AttentionScope::kFactorized;
  if (s == "unfactorized") return AttentionScope::kUnfactorized;
  throw ConfigError("unknown attention scope '" + s + "'");
}

CvaScope parse_cva_scope(const std::string& s) {
  if (s == "local") return CvaScope::kLocal;
  if (s == "global") return CvaScope::kGlobal;
  throw ConfigError("unknown cva_scope '" + s + "'");
}

AggregatorKind parse_aggregator(const std::string& s) {
  if (s == "transformer") return AggregatorKind::kTransformer;
  if (s == "mlp") return AggregatorKind::kMlp;
  throw ConfigError("unknown global aggregator '" + s + "'");
}

}  // namespace

json clip_to_json(const ClipShape& c) {
  return {{"frames", c.frames}, {"height", c.height}, {"width", c.width}, {"channels", c.channels}};
}

ClipShape clip_from_json(const json& j, const std::string& where, ClipShape c) {
  check_keys(j, where, {"frames", "height", "width", "channels"});
  read(j, "frames", c.frames, where);
  read(j, "height", c.height, where);
  read(j, "width", c.width, where);
  read(j, "channels", c.channels, where);
  return c;
}

json model_to_json(const MTVConfig& config) {
  json views = json::array();
  for (const auto& v : config.views) {
    views.push_back({{"tubelet", {v.tubelet.t, v.tubelet.h, v.tubelet.w}},
                     {"encoder",
                      {{"num_layers", v.encoder.num_layers},
                       {"hidden", v.encoder.hidden},
                       {"mlp_dim", v.encoder.mlp_dim},
                       {"num_heads", v.encoder.num_heads},
                       {"attention_scope", to_string(v.encoder.scope)},
                       {"droplayer_rate", v.encoder.droplayer_rate}}}});
  }
  return {{"clip", clip_to_json(config.clip)},
          {"views", views},
          {"fusion",
           {{"method", to_string(config.fusion.method)},
            {"layers", config.fusion.layers},
            {"bottleneck_tokens", config.fusion.bottleneck_tokens},
            {"cva_scope", to_string(config.fusion.cva_scope)}}},
          {"global",
           {{"kind", to_string(config.global.kind)},
            {"num_layers", config.global.num_layers},
            {"hidden", config.global.hidden},
            {"mlp_dim", config.global.mlp_dim},
            {"num_heads", config.global.num_heads}}},
          {"num_classes", config.num_classes},
          {"init_std", config.init_std},
          {"seed", config.seed}};
}

MTVConfig model_from_json(const json& j, const std::string& where, MTVConfig c) {
  check_keys(j, where, {"clip", "views", "fusion", "global", "num_classes", "init_std", "seed"});
  if (j.contains("clip")) c.clip = clip_from_json(j.at("clip"), where + ".clip", c.clip);
  if (j.contains("views")) {
    const json& vs = j.at("views");
    if (!vs.is_array()) throw ConfigError(where + ".views must be an array");
    c.views.clear();
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const std::string w = where + ".views[" + std::to_string(i) + "]";
      const json& v = vs[i];
      check_keys(v, w, {"tubelet", "encoder", "preset"});
      ViewSpec spec;
      if (v.contains("preset")) spec.encoder = encoder_preset(v.at("preset").get<std::string>());
      if (v.contains("tubelet")) {
        const json& t = v.at("tubelet");
        if (!t.is_array() || t.size() != 3) throw ConfigError(w + ".tubelet must be [t, h, w]");
        spec.tubelet = {t[0].get<std::size_t>(), t[1].get<std::size_t>(), t[2].get<std::size_t>()};
      }
      if (v.contains("encoder")) {
        const json& e = v.at("encoder");
        const std::string we = w + ".encoder";
        check_keys(e, we, {"num_layers", "hidden", "mlp_dim", "num_heads", "attention_scope", "droplayer_rate"});
        read(e, "num_layers", spec.encoder.num_layers, we);
        read(e, "hidden", spec.encoder.hidden, we);
        read(e, "mlp_dim", spec.encoder.mlp_dim, we);
        read(e, "num_heads", spec.encoder.num_heads, we);
        read(e, "droplayer_rate", spec.encoder.droplayer_rate, we);
        if (e.contains("attention_scope")) spec.encoder.scope = parse_scope(e.at("attention_scope").get<std::string>());
      }
      c.views.push_back(spec);
    }
  }
  if (j.contains("fusion")) {
    const json& f = j.at("fusion");
    const std::string w = where + ".fusion";
    check_keys(f, w, {"method", "layers", "bottleneck_tokens", "cva_scope"});
    if (f.contains("method")) c.fusion.method = parse_fusion_method(f.at("method").get<std::string>());
    read(f, "layers", c.fusion.layers, w);
    read(f, "bottleneck_tokens", c.fusion.bottleneck_tokens, w);
    if (f.contains("cva_scope")) c.fusion.cva_scope = parse_cva_scope(f.at("cva_scope").get<std::string>());
  }
  if (j.contains("global")) {
    const json& g = j.at("global");
    const std::string w = where + ".global";
    check_keys(g, w, {"kind", "num_layers", "hidden", "mlp_dim", "num_heads"});
    if (g.contains("kind")) c.global.kind = parse_aggregator(g.at("kind").get<std::string>());
    read(g, "num_layers", c.global.num_layers, w);
    read(g, "hidden", c.global.hidden, w);
    read(g, "mlp_dim", c.global.mlp_dim, w);
    read(g, "num_heads", c.global.num_heads, w);
  }
  read(j, "num_classes", c.num_classes, where);
  read(j, "init_std", c.init_std, where);
  read(j, "seed", c.seed, where);
  return c;
}

}  // namespace detail

std::string model_config_to_json(const MTVConfig& config, int indent) {
  return detail::model_to_json(config).dump(indent);
}

MTVConfig model_config_from_json(std::string_view text) {
  detail::json j;
  try {
    j = detail::json::parse(text);
  } catch (const detail::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  return detail::model_from_json(j, "model", MTVConfig{});
}

}  // namespace mtv
