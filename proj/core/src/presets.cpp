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

#include "mtv/presets.hpp"

#include <algorithm>
#include <cctype>

#include "mtv/tokenizer.hpp"

namespace mtv {

namespace {

struct Backbone {
  const char* prefix;
  const char* encoder;
  const char* notation;
};

constexpr Backbone kBackbones[] = {
    {"ti", "tiny", "Ti"}, {"s", "small", "S"}, {"b", "base", "B"}, {"l", "large", "L"}, {"h", "huge", "H"},
};

std::optional<ViewSpec> parse_view(std::string_view token) {
  std::size_t split = 0;
  while (split < token.size() && std::isalpha(static_cast<unsigned char>(token[split]))) ++split;
  if (split == 0 || split == token.size()) return std::nullopt;
  const std::string_view letters = token.substr(0, split);
  const std::string_view digits = token.substr(split);
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    return std::nullopt;
  }
  for (const auto& b : kBackbones) {
    if (letters == b.prefix) {
      ViewSpec v;
      v.encoder = encoder_preset(b.encoder);
      const std::size_t spatial = letters == "h" ? 14 : 16;
      v.tubelet = {static_cast<std::size_t>(std::stoul(std::string(digits))), spatial, spatial};
      return v;
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"b2",
          "ti8",
          "b4",
          "s8",
          "ti16",
          "b2-ti8",
          "b8-ti2",
          "b2-s4-ti8",
          "b8-s4-ti2",
          "b4-s8-ti16",
          "b4-s8-ti16-late",
          "b4-s8-ti16-mlp",
          "b4-s8-ti16-bottleneck",
          "b4-b8-b16",
          "b2-b8",
          "b2-b4-b8",
          "b4-ti16",
          "b2-s4-ti8-unfact",
          "l2-b4-s8-ti16",
          "h2-b4-s8-ti16"};
}

std::string canonical_preset_name(std::string_view name) {
  if (name == "mtv-b" || name == "mtv-b-2s4ti8") return "b2-s4-ti8";
  if (name == "mtv-l") return "l2-b4-s8-ti16";
  if (name == "mtv-h") return "h2-b4-s8-ti16";
  return std::string(name);
}

std::optional<MTVConfig> find_preset(std::string_view raw) {
  const std::string name = canonical_preset_name(raw);
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start <= name.size()) {
    const std::size_t end = std::min(name.find('-', start), name.size());
    tokens.push_back(name.substr(start, end - start));
    start = end + 1;
  }

  MTVConfig cfg;
  cfg.clip = {32, 224, 224, 3};
  cfg.num_classes = 400;
  bool unfactorized = false;
  FusionMethod method = FusionMethod::kCva;
  if (!tokens.empty()) {
    const std::string& last = tokens.back();
    bool suffix = true;
    if (last == "cva") method = FusionMethod::kCva;
    else if (last == "late") method = FusionMethod::kNone;
    else if (last == "mlp") method = FusionMethod::kMlp;
    else if (last == "bottleneck") method = FusionMethod::kBottleneck;
    else if (last == "unfact") unfactorized = true;
    else suffix = false;
    if (suffix) tokens.pop_back();
  }
  if (tokens.empty()) return std::nullopt;

  for (const auto& t : tokens) {
    auto v = parse_view(t);
    if (!v) return std::nullopt;
    cfg.views.push_back(*v);
  }
  // the model orders views by increasing token count
  std::stable_sort(cfg.views.begin(), cfg.views.end(), [&](const ViewSpec& a, const ViewSpec& b) {
    return count_tokens(cfg.clip, a.tubelet).total < count_tokens(cfg.clip, b.tubelet).total;
  });

  std::size_t deepest = 0;
  for (auto& v : cfg.views) {
    deepest = std::max(deepest, v.encoder.num_layers);
    if (unfactorized) v.encoder.scope = AttentionScope::kUnfactorized;
  }

  if (cfg.views.size() == 1) {
    const auto& e = cfg.views.front().encoder;
    cfg.fusion.method = FusionMethod::kNone;
    cfg.global = {AggregatorKind::kTransformer, e.num_layers, e.hidden, e.mlp_dim, e.num_heads};
  } else {
    cfg.fusion.method = method;
    if (method != FusionMethod::kNone) {
      if (deepest >= 32) cfg.fusion.layers = {11, 23, 31};
      else if (deepest >= 24) cfg.fusion.layers = {11, 23};
      else cfg.fusion.layers = {5, 11};
    }
    cfg.global = {AggregatorKind::kTransformer, 12, 768, 3072, 8};
  }
  if (unfactorized) {
    cfg.fusion.method = FusionMethod::kNone;
    cfg.fusion.layers.clear();
    cfg.global = {AggregatorKind::kMlp, 0, 0, 3072, 1};
  }
  try {
    cfg.validate();
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return cfg;
}

std::string view_notation(const MTVConfig& config) {
  std::string out;
  for (std::size_t i = config.views.size(); i-- > 0;) {
    const auto& v = config.views[i];
    std::string label = "?";
    for (const auto& b : kBackbones) {
      auto e = encoder_preset(b.encoder);
      if (e.hidden == v.encoder.hidden && e.num_layers == v.encoder.num_layers && e.mlp_dim == v.encoder.mlp_dim) {
        label = b.notation;
      }
    }
    if (!out.empty()) out += "+";
    out += label + "/" + std::to_string(v.tubelet.t);
  }
  return out;
}

}  // namespace mtv
