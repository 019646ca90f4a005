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

#include "doctest.h"
#include "mtv/analysis.hpp"
#include "mtv/errors.hpp"
#include "mtv/model.hpp"
#include "mtv/presets.hpp"
#include "mtv/tokenizer.hpp"

using namespace mtv;

namespace {

std::uint64_t layout_total(const MTVConfig& c) {
  std::uint64_t n = 0;
  for (const auto& p : param_layout(c)) n += shape_numel(p.shape);
  return n;
}

std::uint64_t macs_of(const CostReport& r, int view, const std::string& component) {
  for (const auto& e : r.breakdown)
    if (e.view == view && e.component == component) return e.macs;
  return 0;
}

}  // namespace

TEST_CASE("analytic parameter counts equal the built layout for every preset") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    const auto c = find_preset(name);
    REQUIRE(c.has_value());
    CHECK(count_params(*c).total_params == layout_total(*c));
  }
  for (const char* alias : {"mtv-b", "mtv-l", "mtv-h"}) CHECK(find_preset(alias).has_value());
  CHECK_FALSE(find_preset("q3-zz").has_value());
}

TEST_CASE("instantiated tiny preset matches the count") {
  const auto c = find_preset("ti16");
  REQUIRE(c.has_value());
  CHECK(count_params(*c).total_params == build_model(*c).num_parameters());
}

TEST_CASE("single-layer single-view cost by hand") {
  MTVConfig c;
  c.clip = {4, 8, 8, 2};
  ViewSpec v;
  v.tubelet = {2, 4, 4};
  v.encoder = {1, 6, 10, 2};
  c.views = {v};
  c.global = {AggregatorKind::kTransformer, 0, 5, 7, 1};
  c.num_classes = 3;
  const CostReport r = count_params(c);
  // 2 temporal slices of 4 spatial tokens, 5 with cls; patch 2*4*4*2 = 64.
  const std::uint64_t embed = 64 * 6 + 6 + 2 * 5 * 6 + 6;
  const std::uint64_t layer = 4 * 36 + 4 * 6 + 2 * 6 + 2 * 6 * 10 + 10 + 6 + 2 * 6;
  const std::uint64_t global = 6 * 5 + 5 + 2 * 5 + 5 * 3 + 3;
  CHECK(r.total_params == embed + layer + global);
  CHECK(r.total_params == build_model(c).num_parameters());

  const std::uint64_t tokens = 10;
  const std::uint64_t macs = 8 * 64 * 6                   // embedding of the 8 tubelets
                             + 4 * tokens * 36            // q, k, v, o
                             + 2 * (2 * 5 * 5 * 6)        // scores and weighted sum per slice
                             + 2 * tokens * 6 * 10        // MLP
                             + 6 * 5 + 5 * 3;             // to_global and head
  CHECK(r.total_macs == macs);
  CHECK(r.flops_per_mac == 2);
  CHECK(r.total_flops == 2 * macs);
  CHECK(r.gflops_at(1) == doctest::Approx(macs * 1e-9));
}

TEST_CASE("halving the finest view's token count scales FLOPs monotonically") {
  MTVConfig c = *find_preset("b2-s4-ti8");
  const ClipShape clip = c.clip;
  const std::size_t fine = c.views.size() - 1;
  REQUIRE(c.views[fine].tubelet.t == 2);
  const auto before = count_tokens(clip, c.views[fine].tubelet).total;
  const CostReport r2 = count_params(c);
  c.views[fine].tubelet.t = 4;
  const auto after = count_tokens(clip, c.views[fine].tubelet).total;
  const CostReport r4 = count_params(c);
  CHECK(before == 2 * after);
  CHECK(r4.total_flops < r2.total_flops);
  const int vf = static_cast<int>(fine);
  CHECK(macs_of(r2, vf, "embedding") == macs_of(r4, vf, "embedding"));  // same pixels, twice the patch
  CHECK(2 * macs_of(r4, vf, "attention_proj") == macs_of(r2, vf, "attention_proj"));

  // Finer tubelets on every axis never reduce the cost.
  MTVConfig s = *find_preset("b4");
  std::uint64_t prev = 0;
  for (std::size_t t : {16, 8, 4, 2}) {
    s.views[0].tubelet.t = t;
    const auto f = count_params(s).total_flops;
    CHECK(f > prev);
    prev = f;
  }
}

TEST_CASE("count_flops follows the clip size") {
  const MTVConfig c = *find_preset("b4");
  const CostReport own = count_params(c);
  const CostReport same = count_flops(c, c.clip);
  CHECK(own.total_macs == same.total_macs);
  ClipShape longer = c.clip;
  longer.frames *= 2;
  CHECK(count_flops(c, longer).total_macs > own.total_macs);
  ClipShape tiny = c.clip;
  tiny.frames = 1;
  CHECK_THROWS_AS(count_flops(c, tiny), ConfigError);
}

TEST_CASE("comparison against reference rows") {
  const auto ref = find_reference("b2-ti8");
  REQUIRE(ref.has_value());
  CHECK(ref->gflops == 337);
  CHECK(ref->mparams == 221);
  CHECK_FALSE(find_reference("nope").has_value());
  CostReport r;
  r.total_macs = 370'700'000'000ull;
  r.total_params = 198'900'000;
  const Deviation d = compare_table(r, *ref);
  CHECK(d.gflops == doctest::Approx(370.7));
  CHECK(d.gflops_rel == doctest::Approx(0.1));
  CHECK(d.mparams_rel == doctest::Approx(-0.1));
  for (const auto& row : table_references()) CHECK(find_preset(row.key).has_value() == (row.method != "ensemble"));

  const std::string text = format_report(count_params(*find_preset("b2-ti8")), ref);
  for (const char* key : {"params=", "flops=", "flops_per_mac=2", "ref_gflops=337", "gflops_deviation="})
    CHECK(text.find(key) != std::string::npos);
}
