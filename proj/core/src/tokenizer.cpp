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

#include "mtv/tokenizer.hpp"

#include "mtv/errors.hpp"
#include "mtv/ops.hpp"

namespace mtv {

TokenCount count_tokens(const ClipShape& clip, const TubeletSpec& spec) {
  if (spec.t == 0 || spec.h == 0 || spec.w == 0) return {};
  TokenCount c;
  c.temporal = clip.frames / spec.t;
  c.spatial = (clip.height / spec.h) * (clip.width / spec.w);
  c.total = c.temporal * c.spatial;
  return c;
}

Tensor extract_tubelets(const Tensor& clip, const TubeletSpec& spec) {
  const bool batched = clip.dim() == 5;
  if (clip.dim() != 4 && !batched) {
    throw DimensionError("clip must be [T, H, W, C] or [B, T, H, W, C], got " + shape_str(clip.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  const std::size_t B = batched ? clip.size(0) : 1;
  const std::size_t T = clip.size(off), H = clip.size(off + 1), W = clip.size(off + 2), C = clip.size(off + 3);
  if (spec.t == 0 || spec.h == 0 || spec.w == 0 || spec.t > T || spec.h > H || spec.w > W) {
    throw DimensionError("tubelet " + std::to_string(spec.t) + "x" + std::to_string(spec.h) + "x" +
                         std::to_string(spec.w) + " does not fit clip " + shape_str(clip.shape()));
  }
  const std::size_t nt = T / spec.t, nh = H / spec.h, nw = W / spec.w;
  const std::size_t ns = nh * nw;
  const std::size_t P = spec.t * spec.h * spec.w * C;

  // index[j] = source offset of output element j
  std::vector<std::size_t> index(B * nt * ns * P);
  std::size_t j = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t it = 0; it < nt; ++it)
      for (std::size_t ih = 0; ih < nh; ++ih)
        for (std::size_t iw = 0; iw < nw; ++iw)
          for (std::size_t dt = 0; dt < spec.t; ++dt)
            for (std::size_t dh = 0; dh < spec.h; ++dh)
              for (std::size_t dw = 0; dw < spec.w; ++dw) {
                const std::size_t f = it * spec.t + dt, y = ih * spec.h + dh, x = iw * spec.w + dw;
                const std::size_t base = (((b * T + f) * H + y) * W + x) * C;
                for (std::size_t c = 0; c < C; ++c) index[j++] = base + c;
              }

  Shape out_shape = batched ? Shape{B, nt, ns, P} : Shape{nt, ns, P};
  auto out = Tensor::zeros(out_shape);
  auto o = out.mutable_data();
  auto src = clip.data();
  for (std::size_t i = 0; i < index.size(); ++i) o[i] = src[index[i]];

  auto in = clip.impl();
  detail::record(out, {&clip}, [in, index = std::move(index)](const Buffer& g) {
    auto& gi = in->ensure_grad();
    for (std::size_t i = 0; i < index.size(); ++i) gi[index[i]] += g[i];
  });
  return out;
}

TokenSet tokenize_view(const Tensor& clip, const ViewSpec& view, const EmbeddingParams& params,
                       std::size_t view_id) {
  Tensor x = extract_tubelets(clip, view.tubelet);
  if (x.dim() == 3) x = ops::reshape(x, {1, x.size(0), x.size(1), x.size(2)});
  const std::size_t B = x.size(0), nt = x.size(1), ns = x.size(2), P = x.size(3);
  const std::size_t d = view.encoder.hidden;
  if (params.proj.shape() != Shape{P, d} || params.cls.shape() != Shape{d} ||
      params.pos.shape() != Shape{nt, ns + 1, d} || (params.bias.defined() && params.bias.shape() != Shape{d})) {
    throw DimensionError("embedding parameters do not match view with " + std::to_string(nt) + "x" +
                         std::to_string(ns) + " tokens of width " + std::to_string(d) + " from " +
                         std::to_string(P) + "-value tubelets");
  }
  Tensor emb = ops::linear(x, params.proj, params.bias);
  Tensor cls = ops::expand(ops::reshape(params.cls, {1, d}), {B, nt});
  Tensor tokens = ops::add(ops::concat({cls, emb}, 2), params.pos);
  return {tokens, view_id};
}

std::vector<TokenSet> tokenize_multiview(const Tensor& clip, std::span<const ViewSpec> views,
                                         std::span<const EmbeddingParams> params) {
  if (views.size() != params.size()) throw ContractError("one embedding parameter set per view is required");
  if (clip.dim() < 4) throw DimensionError("clip must be [T, H, W, C] or [B, T, H, W, C]");
  const std::size_t off = clip.dim() == 5 ? 1 : 0;
  const ClipShape shape{clip.size(off), clip.size(off + 1), clip.size(off + 2), clip.size(off + 3)};
  std::size_t prev = 0;
  for (const auto& v : views) {
    const std::size_t n = count_tokens(shape, v.tubelet).total;
    if (n < prev) throw ContractError("views must be ordered by increasing token count");
    prev = n;
  }
  std::vector<TokenSet> out;
  out.reserve(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) out.push_back(tokenize_view(clip, views[i], params[i], i));
  return out;
}

}  // namespace mtv
