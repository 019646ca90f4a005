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

#include "mtv/model.hpp"

#include <cmath>

#include "mtv/errors.hpp"
#include "mtv/ops.hpp"

namespace mtv {

namespace {

enum class Init { kNormal, kZero, kOne };

// Creates (or, when not allocating, only records) named parameters in a
// fixed order, so that layout and instantiation share one code path.
class Builder {
 public:
  Builder(bool allocate, std::uint64_t seed, double init_std) : allocate_(allocate), std_(init_std), rng_(seed) {}

  Tensor param(const std::string& name, Shape shape, Init init) {
    layout.push_back({name, shape});
    if (!allocate_) return {};
    Tensor t = Tensor::zeros(shape, true);
    auto d = t.mutable_data();
    if (init == Init::kOne) {
      std::fill(d.begin(), d.end(), 1.0);
    } else if (init == Init::kNormal) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (auto& v : d) {
        double z;
        do {
          z = normal(rng_);
        } while (std::abs(z) > 2.0);
        v = std_ * z;
      }
    }
    registry.push_back({name, t});
    return t;
  }

  std::vector<ParamShape> layout;
  std::vector<NamedTensor> registry;

 private:
  bool allocate_;
  double std_;
  std::mt19937_64 rng_;
};

EncoderParams build_encoder(Builder& b, const std::string& prefix, std::size_t layers, std::size_t d,
                            std::size_t mlp) {
  EncoderParams enc;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l) + ".";
    LayerParams lp;
    lp.ln1_gamma = b.param(p + "ln1.gamma", {d}, Init::kOne);
    lp.ln1_beta = b.param(p + "ln1.beta", {d}, Init::kZero);
    lp.wq = b.param(p + "attn.wq", {d, d}, Init::kNormal);
    lp.bq = b.param(p + "attn.bq", {d}, Init::kZero);
    lp.wk = b.param(p + "attn.wk", {d, d}, Init::kNormal);
    lp.bk = b.param(p + "attn.bk", {d}, Init::kZero);
    lp.wv = b.param(p + "attn.wv", {d, d}, Init::kNormal);
    lp.bv = b.param(p + "attn.bv", {d}, Init::kZero);
    lp.wo = b.param(p + "attn.wo", {d, d}, Init::kNormal);
    lp.bo = b.param(p + "attn.bo", {d}, Init::kZero);
    lp.ln2_gamma = b.param(p + "ln2.gamma", {d}, Init::kOne);
    lp.ln2_beta = b.param(p + "ln2.beta", {d}, Init::kZero);
    lp.w1 = b.param(p + "mlp.w1", {d, mlp}, Init::kNormal);
    lp.b1 = b.param(p + "mlp.b1", {mlp}, Init::kZero);
    lp.w2 = b.param(p + "mlp.w2", {mlp, d}, Init::kNormal);
    lp.b2 = b.param(p + "mlp.b2", {d}, Init::kZero);
    enc.layers.push_back(std::move(lp));
  }
  return enc;
}

void assemble(const MTVConfig& cfg, Builder& b, ModelParams& m) {
  cfg.validate();
  m.config = cfg;
  const std::size_t V = cfg.views.size();
  const bool transformer = cfg.global.kind == AggregatorKind::kTransformer;
  const std::size_t dg = cfg.global.hidden;

  for (std::size_t j = 0; j < V; ++j) {
    const auto& v = cfg.views[j];
    const std::size_t d = v.encoder.hidden;
    const auto count = count_tokens(cfg.clip, v.tubelet);
    const std::size_t patch = v.tubelet.t * v.tubelet.h * v.tubelet.w * cfg.clip.channels;
    const std::string p = "view" + std::to_string(j);
    ViewParams vp;
    vp.embed.proj = b.param(p + ".embed.proj", {patch, d}, Init::kNormal);
    vp.embed.bias = b.param(p + ".embed.bias", {d}, Init::kZero);
    vp.embed.pos = b.param(p + ".embed.pos", {count.temporal, count.spatial + 1, d}, Init::kZero);
    vp.embed.cls = b.param(p + ".embed.cls", {d}, Init::kNormal);
    vp.encoder = build_encoder(b, p + ".encoder", v.encoder.num_layers, d, v.encoder.mlp_dim);
    if (transformer) {
      vp.to_global_w = b.param(p + ".to_global.w", {d, dg}, Init::kNormal);
      vp.to_global_b = b.param(p + ".to_global.b", {dg}, Init::kZero);
    }
    m.views.push_back(std::move(vp));
  }

  const auto schedule = fusion_schedule(cfg.views, cfg.fusion);
  const std::size_t events = schedule.size();
  for (std::size_t e = 0; e < events && cfg.fusion.method == FusionMethod::kCva; ++e) {
    std::vector<CvaParams> row;
    for (std::size_t p = 0; p + 1 < V; ++p) {
      const std::size_t dc = cfg.views[p].encoder.hidden, df = cfg.views[p + 1].encoder.hidden;
      const std::string n = "fusion.cva" + std::to_string(e) + ".pair" + std::to_string(p) + ".";
      CvaParams c;
      c.proj = b.param(n + "proj", {df, dc}, Init::kNormal);
      c.wq = b.param(n + "wq", {dc, dc}, Init::kNormal);
      c.wk = b.param(n + "wk", {dc, dc}, Init::kNormal);
      c.wv = b.param(n + "wv", {dc, dc}, Init::kZero);
      row.push_back(c);
    }
    m.fusion.cva.push_back(std::move(row));
  }
  if (events > 0 && cfg.fusion.method == FusionMethod::kBottleneck) {
    for (std::size_t p = 0; p + 1 < V; ++p) {
      m.fusion.bottleneck_tokens.push_back(b.param("fusion.bottleneck.tokens" + std::to_string(p + 1),
                                                   {cfg.fusion.bottleneck_tokens, cfg.views[p + 1].encoder.hidden},
                                                   Init::kNormal));
    }
    for (std::size_t e = 0; e < events; ++e) {
      std::vector<Tensor> row;
      for (std::size_t p = 0; p + 1 < V; ++p) {
        row.push_back(b.param("fusion.bottleneck" + std::to_string(e) + ".pair" + std::to_string(p) + ".proj",
                              {cfg.views[p + 1].encoder.hidden, cfg.views[p].encoder.hidden}, Init::kZero));
      }
      m.fusion.bottleneck_proj.push_back(std::move(row));
    }
  }
  for (std::size_t e = 0; e < events && cfg.fusion.method == FusionMethod::kMlp; ++e) {
    std::vector<Tensor> row;
    for (std::size_t p = 0; p + 1 < V; ++p) {
      row.push_back(b.param("fusion.mlp" + std::to_string(e) + ".pair" + std::to_string(p) + ".w_extra",
                            {cfg.views[p + 1].encoder.hidden, cfg.views[p].encoder.mlp_dim}, Init::kNormal));
    }
    m.fusion.mlp_extra.push_back(std::move(row));
  }

  std::size_t width = 0;
  if (transformer) {
    if (cfg.global.num_layers > 0) m.global.cls = b.param("global.cls", {dg}, Init::kNormal);
    m.global.encoder = build_encoder(b, "global.encoder", cfg.global.num_layers, dg, cfg.global.mlp_dim);
    m.global.norm_gamma = b.param("global.norm.gamma", {dg}, Init::kOne);
    m.global.norm_beta = b.param("global.norm.beta", {dg}, Init::kZero);
    width = dg;
  } else {
    std::size_t concat = 0;
    for (const auto& v : cfg.views) concat += v.encoder.hidden;
    m.global.mlp_w = b.param("global.mlp.w", {concat, cfg.global.mlp_dim}, Init::kNormal);
    m.global.mlp_b = b.param("global.mlp.b", {cfg.global.mlp_dim}, Init::kZero);
    width = cfg.global.mlp_dim;
  }
  m.head_w = b.param("head.w", {width, cfg.num_classes}, Init::kNormal);
  m.head_b = b.param("head.b", {cfg.num_classes}, Init::kZero);
}

bool is_batched(const Tensor& clip, const ClipShape& shape) {
  const Shape want{shape.frames, shape.height, shape.width, shape.channels};
  if (clip.dim() == 4 && clip.shape() == want) return false;
  if (clip.dim() == 5 && Shape(clip.shape().begin() + 1, clip.shape().end()) == want) return true;
  throw DimensionError("clip " + shape_str(clip.shape()) + " does not match the model's " + shape_str(want));
}

}  // namespace

std::size_t ModelParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& p : registry) n += p.tensor.numel();
  return n;
}

std::vector<ParamShape> param_layout(const MTVConfig& config) {
  Builder b(false, config.seed, config.init_std);
  ModelParams m;
  assemble(config, b, m);
  return b.layout;
}

ModelParams build_model(const MTVConfig& config) {
  Builder b(true, config.seed, config.init_std);
  ModelParams m;
  assemble(config, b, m);
  m.registry = std::move(b.registry);
  return m;
}

std::vector<TokenSet> encode_views(const ModelParams& params, const Tensor& clip, bool training,
                                   std::mt19937_64* rng) {
  const auto& cfg = params.config;
  is_batched(clip, cfg.clip);
  Tensor batched = clip.dim() == 5 ? clip : ops::reshape(clip, {1, clip.size(0), clip.size(1), clip.size(2), clip.size(3)});
  std::vector<EmbeddingParams> embeds;
  std::vector<EncoderParams> encoders;
  for (const auto& v : params.views) {
    embeds.push_back(v.embed);
    encoders.push_back(v.encoder);
  }
  auto tokens = tokenize_multiview(batched, cfg.views, embeds);
  std::vector<std::vector<bool>> drops;
  if (training && rng != nullptr) {
    for (const auto& v : cfg.views) drops.push_back(droplayer_draws(*rng, v.encoder.num_layers, v.encoder.droplayer_rate));
  }
  return run_multiview_encoder(tokens, cfg.views, encoders, cfg.fusion, params.fusion, drops);
}

Tensor forward(const ModelParams& params, const Tensor& clip, bool training, std::mt19937_64* rng) {
  const auto& cfg = params.config;
  const bool batched = is_batched(clip, cfg.clip);
  auto views = encode_views(params, clip, training, rng);
  const std::size_t B = views.front().batch();

  Tensor h;
  if (cfg.global.kind == AggregatorKind::kTransformer) {
    const std::size_t dg = cfg.global.hidden;
    std::vector<Tensor> seq;
    if (cfg.global.num_layers > 0) seq.push_back(ops::expand(ops::reshape(params.global.cls, {1, 1, dg}), {B}));
    for (std::size_t j = 0; j < views.size(); ++j) {
      Tensor z = ops::linear(pool_view_cls(views[j]), params.views[j].to_global_w, params.views[j].to_global_b);
      seq.push_back(ops::reshape(z, {B, 1, 1, dg}));
    }
    Tensor g = ops::concat(std::span<const Tensor>(seq), 2);  // [B, 1, tokens, dg]
    if (cfg.global.num_layers > 0) {
      for (const auto& layer : params.global.encoder.layers) g = encoder_layer(g, layer, cfg.global.num_heads);
      g = ops::slice(g, 2, 0, 1);
    } else {
      g = ops::mean(g, 2);
    }
    h = ops::layer_norm(ops::reshape(g, {B, dg}), params.global.norm_gamma, params.global.norm_beta);
  } else {
    std::vector<Tensor> cls;
    for (const auto& v : views) cls.push_back(pool_view_cls(v));
    h = ops::gelu(ops::linear(ops::concat(std::span<const Tensor>(cls), 1), params.global.mlp_w, params.global.mlp_b));
  }
  Tensor logits = ops::linear(h, params.head_w, params.head_b);
  return batched ? logits : ops::reshape(logits, {cfg.num_classes});
}

Tensor multi_crop_inference(const ModelParams& params, std::span<const Tensor> crops) {
  if (crops.empty()) throw ContractError("multi-crop inference needs at least one crop");
  NoGradGuard guard;
  Tensor total;
  for (const auto& crop : crops) {
    Tensor p = ops::softmax(forward(params, crop, false), -1);
    if (total.defined() && p.shape() != total.shape()) throw DimensionError("crops must share one shape");
    total = total.defined() ? ops::add(total, p) : p;
  }
  return ops::scale(total, 1.0 / static_cast<double>(crops.size()));
}

std::vector<Tensor> extract_crops(const Tensor& clip, const ClipShape& size, std::size_t temporal,
                                  std::size_t spatial) {
  if (temporal == 0 || spatial == 0) throw ContractError("crop counts must be positive");
  if (clip.dim() != 4 && clip.dim() != 5) throw DimensionError("clip must be [T, H, W, C] or [B, T, H, W, C]");
  const int off = clip.dim() == 5 ? 1 : 0;
  const std::size_t T = clip.size(off), H = clip.size(off + 1), W = clip.size(off + 2);
  if (T < size.frames || H < size.height || W < size.width || clip.size(off + 3) != size.channels) {
    throw DimensionError("clip " + shape_str(clip.shape()) + " is smaller than the crop size");
  }
  auto starts = [](std::size_t extent, std::size_t want, std::size_t n) {
    std::vector<std::size_t> s;
    const std::size_t slack = extent - want;
    if (n == 1) {
      s.push_back(slack / 2);
    } else {
      for (std::size_t i = 0; i < n; ++i) s.push_back((2 * i * slack + (n - 1)) / (2 * (n - 1)));
    }
    return s;
  };
  const bool along_height = H > W;
  const auto ts = starts(T, size.frames, temporal);
  const auto ss = starts(along_height ? H : W, along_height ? size.height : size.width, spatial);
  const std::size_t hc = (H - size.height) / 2, wc = (W - size.width) / 2;
  std::vector<Tensor> crops;
  NoGradGuard guard;
  for (std::size_t t0 : ts) {
    for (std::size_t s0 : ss) {
      const std::size_t y0 = along_height ? s0 : hc;
      const std::size_t x0 = along_height ? wc : s0;
      Tensor c = ops::slice(clip, off, t0, t0 + size.frames);
      c = ops::slice(c, off + 1, y0, y0 + size.height);
      c = ops::slice(c, off + 2, x0, x0 + size.width);
      crops.push_back(c);
    }
  }
  return crops;
}

}  // namespace mtv
