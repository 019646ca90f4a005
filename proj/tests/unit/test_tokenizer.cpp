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

#include <random>

#include "doctest.h"
#include "mtv/errors.hpp"
#include "mtv/gradcheck.hpp"
#include "mtv/ops.hpp"
#include "mtv/tokenizer.hpp"
#include "test_util.hpp"

using namespace mtv;
using test::random_tensor;

namespace {

// Counts tubelets by walking every aligned origin that fits inside the clip.
std::size_t enumerate_tubelets(const ClipShape& c, const TubeletSpec& s) {
  std::size_t n = 0;
  for (std::size_t f = 0; f + s.t <= c.frames; f += s.t)
    for (std::size_t y = 0; y + s.h <= c.height; y += s.h)
      for (std::size_t x = 0; x + s.w <= c.width; x += s.w) ++n;
  return n;
}

ViewSpec view(std::size_t t, std::size_t h, std::size_t w, std::size_t d) {
  ViewSpec v;
  v.tubelet = {t, h, w};
  v.encoder = {1, d, 2 * d, 1};
  return v;
}

EmbeddingParams embedding(const ClipShape& clip, const ViewSpec& v, std::uint64_t seed) {
  const auto n = count_tokens(clip, v.tubelet);
  const std::size_t P = v.tubelet.t * v.tubelet.h * v.tubelet.w * clip.channels, d = v.encoder.hidden;
  return {random_tensor({P, d}, seed), random_tensor({d}, seed + 1), random_tensor({n.temporal, n.spatial + 1, d}, seed + 2),
          random_tensor({d}, seed + 3)};
}

}  // namespace

TEST_CASE("token counts follow the floor-tiling formula on random shapes") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const ClipShape clip{1 + rng() % 40, 1 + rng() % 60, 1 + rng() % 60, 1 + rng() % 3};
    const TubeletSpec spec{1 + rng() % 9, 1 + rng() % 20, 1 + rng() % 20};
    const auto c = count_tokens(clip, spec);
    CHECK(c.total == enumerate_tubelets(clip, spec));
    CHECK(c.total == (clip.frames / spec.t) * (clip.height / spec.h) * (clip.width / spec.w));
    CHECK(c.total == c.temporal * c.spatial);
  }
}

TEST_CASE("three-view base model token counts on a 32x224x224 clip") {
  const ClipShape clip{32, 224, 224, 3};
  CHECK(count_tokens(clip, {2, 16, 16}).total == 3136);
  CHECK(count_tokens(clip, {4, 16, 16}).total == 1568);
  CHECK(count_tokens(clip, {8, 16, 16}).total == 784);
  CHECK(count_tokens(clip, {8, 16, 16}).spatial == 196);
}

TEST_CASE("oversized tubelets give zero tokens and cannot be extracted") {
  const ClipShape clip{4, 8, 8, 1};
  CHECK(count_tokens(clip, {5, 2, 2}).total == 0);
  CHECK(count_tokens(clip, {0, 2, 2}).total == 0);
  CHECK_THROWS_AS(extract_tubelets(Tensor::zeros({4, 8, 8, 1}), {5, 2, 2}), DimensionError);
  CHECK_THROWS_AS(extract_tubelets(Tensor::zeros({8, 8, 1}), {1, 2, 2}), DimensionError);
}

TEST_CASE("tubelets reassemble into the cropped clip") {
  const std::size_t T = 7, H = 9, W = 10, C = 2;
  const TubeletSpec s{2, 3, 4};
  Tensor clip = random_tensor({T, H, W, C}, 3);
  Tensor tub = extract_tubelets(clip, s);
  const std::size_t nt = T / s.t, nh = H / s.h, nw = W / s.w;
  REQUIRE(tub.shape() == Shape{nt, nh * nw, s.t * s.h * s.w * C});
  for (std::size_t f = 0; f < nt * s.t; ++f)
    for (std::size_t y = 0; y < nh * s.h; ++y)
      for (std::size_t x = 0; x < nw * s.w; ++x)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t tok = (y / s.h) * nw + x / s.w;
          const std::size_t inner = (((f % s.t) * s.h + y % s.h) * s.w + x % s.w) * C + c;
          CHECK(tub.at({f / s.t, tok, inner}) == clip.at({f, y, x, c}));
        }

  // A batch extracts each clip independently.
  Tensor batch = ops::concat({ops::reshape(clip, {1, T, H, W, C}), ops::reshape(ops::scale(clip, 2.0), {1, T, H, W, C})}, 0);
  Tensor bt = extract_tubelets(batch, s);
  CHECK(bt.shape() == Shape{2, nt, nh * nw, s.t * s.h * s.w * C});
  CHECK(test::bitwise_equal(ops::slice(bt, 0, 0, 1), ops::reshape(tub, {1, nt, nh * nw, s.t * s.h * s.w * C})));
}

TEST_CASE("tokenize_view equals an explicit embedding oracle") {
  const ClipShape shape{4, 8, 8, 1};
  const ViewSpec v = view(2, 4, 4, 6);
  const auto p = embedding(shape, v, 10);
  Tensor clip = random_tensor({4, 8, 8, 1}, 11);
  const TokenSet ts = tokenize_view(clip, v, p, 3);
  CHECK(ts.view_id == 3);
  REQUIRE(ts.tokens.shape() == Shape{1, 2, 5, 6});
  Tensor tub = extract_tubelets(clip, v.tubelet);
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t k = 0; k < 6; ++k) CHECK(ts.tokens.at({0, t, 0, k}) == doctest::Approx(p.cls.at({k}) + p.pos.at({t, 0, k})));
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t k = 0; k < 6; ++k) {
        double e = p.bias.at({k});
        for (std::size_t i = 0; i < 32; ++i) e += tub.at({t, s, i}) * p.proj.at({i, k});
        CHECK(ts.tokens.at({0, t, s + 1, k}) == doctest::Approx(e + p.pos.at({t, s + 1, k})).epsilon(1e-13));
      }
  }
}

TEST_CASE("pixels outside the tiled region do not affect tokens") {
  const ClipShape shape{5, 9, 9, 1};
  const ViewSpec v = view(2, 4, 4, 4);
  const auto p = embedding(shape, v, 20);
  Tensor a = random_tensor({5, 9, 9, 1}, 21);
  Tensor b = a.clone();
  auto d = b.mutable_data();
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 9; ++x) d[(4 * 9 + y) * 9 + x] = 100.0;  // last frame
  for (std::size_t f = 0; f < 5; ++f) d[(f * 9 + 8) * 9 + 3] = -50.0;    // last row
  CHECK(test::bitwise_equal(tokenize_view(a, v, p).tokens, tokenize_view(b, v, p).tokens));
}

TEST_CASE("multiview tokenization") {
  const ClipShape shape{8, 8, 8, 1};
  std::vector<ViewSpec> views{view(4, 4, 4, 4), view(2, 4, 4, 6)};
  std::vector<EmbeddingParams> params{embedding(shape, views[0], 30), embedding(shape, views[1], 40)};
  Tensor clip = random_tensor({8, 8, 8, 1}, 41);
  auto sets = tokenize_multiview(clip, views, params);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].temporal() == 2);
  CHECK(sets[1].temporal() == 4);
  CHECK(sets[1].hidden() == 6);
  CHECK(sets[1].view_id == 1);

  std::vector<ViewSpec> reversed{views[1], views[0]};
  std::vector<EmbeddingParams> rparams{params[1], params[0]};
  CHECK_THROWS_AS(tokenize_multiview(clip, reversed, rparams), ContractError);
  CHECK_THROWS_AS(tokenize_view(clip, views[0], params[1]), DimensionError);
}

TEST_CASE("tokenizer gradients") {
  const ClipShape shape{4, 4, 4, 1};
  const ViewSpec v = view(2, 2, 2, 3);
  auto p = embedding(shape, v, 50);
  for (Tensor* t : {&p.proj, &p.bias, &p.pos, &p.cls}) t->set_requires_grad(true);
  Tensor clip = random_tensor({4, 4, 4, 1}, 51, 1.0, true);
  Tensor probe = random_tensor({1, 2, 5, 3}, 52);
  auto r = finite_diff_check([&] { return ops::sum(ops::mul(tokenize_view(clip, v, p).tokens, probe)); },
                             {{"clip", clip}, {"proj", p.proj}, {"bias", p.bias}, {"pos", p.pos}, {"cls", p.cls}});
  CHECK(r.max_error < 1e-4);
}
