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

#include <benchmark/benchmark.h>

#include <random>

#include "mtv/analysis.hpp"
#include "mtv/model.hpp"
#include "mtv/ops.hpp"
#include "mtv/presets.hpp"
#include "mtv/run_config.hpp"
#include "mtv/training.hpp"

using namespace mtv;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Buffer d(shape_numel(shape));
  for (auto& v : d) v = n(rng);
  return Tensor::from_data(std::move(shape), std::move(d));
}

Tensor toy_batch(const MTVConfig& c, std::size_t batch) {
  return random_tensor({batch, c.clip.frames, c.clip.height, c.clip.width, c.clip.channels}, 3);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(4)->Range(16, 256);

// Inference on the three-view toy model; range(0) is the fusion method.
void BM_ToyForward(benchmark::State& state) {
  MTVConfig c = toy_model(SynthSpec{});
  c.fusion.method = static_cast<FusionMethod>(state.range(0));
  if (c.fusion.method == FusionMethod::kNone) c.fusion.layers.clear();
  const ModelParams m = build_model(c);
  const Tensor x = toy_batch(c, 8);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, x).data().data());
  state.SetLabel(to_string(c.fusion.method));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_ToyForward)
    ->Arg(static_cast<int>(FusionMethod::kNone))
    ->Arg(static_cast<int>(FusionMethod::kCva))
    ->Arg(static_cast<int>(FusionMethod::kMlp))
    ->Arg(static_cast<int>(FusionMethod::kBottleneck))
    ->Unit(benchmark::kMillisecond);

void BM_ToyTrainStep(benchmark::State& state) {
  const MTVConfig c = toy_model(SynthSpec{});
  const ModelParams m = build_model(c);
  std::vector<Tensor> params;
  for (const auto& p : m.named_parameters()) {
    Tensor t = p.tensor;
    t.set_requires_grad(true);
    params.push_back(t);
  }
  const Tensor x = toy_batch(c, 8);
  const std::vector<int> labels{0, 1, 2, 3, 4, 5, 6, 7};
  OptimizerState opt;
  std::mt19937_64 rng(0);
  for (auto _ : state) {
    for (auto& p : params) p.zero_grad();
    TapeScope scope;
    backward(ops::cross_entropy(forward(m, x, true, &rng), labels));
    sgd_momentum_step(params, opt, 1e-3);
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_ToyTrainStep)->Unit(benchmark::kMillisecond);

void BM_CostModel(benchmark::State& state) {
  const MTVConfig c = *find_preset("b2-s4-ti8");
  for (auto _ : state) benchmark::DoNotOptimize(count_params(c).total_flops);
}
BENCHMARK(BM_CostModel);

}  // namespace

BENCHMARK_MAIN();
