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

// Acceptance checks, one PASS/FAIL line each. Exit status is zero when the
// set of failing checks equals the --expect-fail list.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <unistd.h>

#include "CLI11.hpp"
#include "mtv/analysis.hpp"
#include "mtv/checkpoint.hpp"
#include "mtv/model.hpp"
#include "mtv/presets.hpp"
#include "mtv/run_config.hpp"
#include "mtv/synth.hpp"
#include "mtv/training.hpp"
#include "mtv_cli.hpp"

using namespace mtv;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

Tensor random_clip(const ClipShape& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Buffer d(c.frames * c.height * c.width * c.channels);
  for (auto& v : d) v = n(rng);
  return Tensor::from_data({c.frames, c.height, c.width, c.channels}, std::move(d));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

fs::path scratch_dir() {
  const fs::path p = fs::temp_directory_path() / ("mtv_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

// --- 1 ------------------------------------------------------------------

Verdict gradients() {
  const auto t0 = Clock::now();
  std::ostringstream log;
  const int code = cli::run_gradcheck(cli::gradcheck_suite(0), log);
  const double s = seconds_since(t0);
  std::istringstream lines(log.str());
  for (std::string line; std::getline(lines, line);) std::cout << "    " << line << "\n";
  return {code == cli::kExitOk && s < 60.0, fmt("every case below 1e-4, %.1f s (limit 60 s)", s)};
}

// --- 2 ------------------------------------------------------------------

Verdict zero_init_identity() {
  NoGradGuard no_grad;
  const SynthSpec synth;
  std::string detail;
  bool ok = true;
  for (FusionMethod method : {FusionMethod::kCva, FusionMethod::kMlp, FusionMethod::kBottleneck}) {
    MTVConfig c = toy_model(synth);
    c.fusion.method = method;
    if (method == FusionMethod::kBottleneck) c.fusion.bottleneck_tokens = 4;
    ModelParams fused = build_model(c);
    // MLP fusion draws its extra rows at random; zero them to open the path.
    for (auto& pair : fused.fusion.mlp_extra)
      for (Tensor w : pair)
        for (auto& v : w.mutable_data()) v = 0.0;
    ModelParams plain = fused;
    plain.config.fusion.method = FusionMethod::kNone;
    std::size_t same = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Tensor clip = random_clip(c.clip, 100 + s);
      if (bitwise_equal(forward(fused, clip), forward(plain, clip))) ++same;
    }
    ok = ok && same == 10;
    detail += fmt("%s %zu/10  ", to_string(method).c_str(), same);
  }
  return {ok, detail + "bitwise equal to unfused; mlp with its extra rows zeroed"};
}

// --- 3 ------------------------------------------------------------------

Verdict factorized_locality() {
  NoGradGuard no_grad;
  const SynthSpec synth;
  MTVConfig c = toy_model(synth);
  c.views = {c.views.back()};  // t = 2: eight temporal indices
  c.views[0].encoder.num_layers = 4;
  c.views[0].encoder.scope = AttentionScope::kFactorized;
  c.fusion.method = FusionMethod::kNone;
  c.fusion.layers.clear();
  const ModelParams m = build_model(c);
  const std::size_t t = c.views[0].tubelet.t;
  const Tensor base = random_clip(c.clip, 7);
  Tensor moved = base.clone();
  const std::size_t frame = c.clip.height * c.clip.width * c.clip.channels;
  auto d = moved.mutable_data();
  for (std::size_t i = 2 * t * frame; i < 3 * t * frame; ++i) d[i] += 0.5;
  const Tensor a = encode_views(m, base)[0].tokens, b = encode_views(m, moved)[0].tokens;
  const std::size_t n_t = a.size(1), per = a.numel() / n_t;
  double outside = 0.0, inside = 0.0;
  for (std::size_t ti = 0; ti < n_t; ++ti)
    for (std::size_t k = 0; k < per; ++k) {
      double& worst = ti == 2 ? inside : outside;
      worst = std::max(worst, std::abs(a.data()[ti * per + k] - b.data()[ti * per + k]));
    }
  return {outside == 0.0 && inside > 0.0,
          fmt("4 layers, max change outside index 2 = %g, inside = %.3g", outside, inside)};
}

// --- 4 ------------------------------------------------------------------

Verdict parameter_counts() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"b2", "ti8", "b2-ti8", "b2-s4-ti8", "b4-s8-ti16"}) {
    const MTVConfig c = *find_preset(name);
    const std::uint64_t counted = count_params(c).total_params;
    const std::uint64_t built = build_model(c).num_parameters();
    ok = ok && counted == built;
    detail += fmt("%s %s ", view_notation(c).c_str(), counted == built ? "ok" : "MISMATCH");
  }
  std::size_t layout_ok = 0;
  const auto names = preset_names();
  for (const auto& name : names) {
    const MTVConfig c = *find_preset(name);
    std::uint64_t total = 0;
    for (const auto& p : param_layout(c)) total += shape_numel(p.shape);
    if (total == count_params(c).total_params) ++layout_ok;
  }
  ok = ok && layout_ok == names.size();
  return {ok, detail + fmt("(instantiated); %zu/%zu presets match the layout", layout_ok, names.size())};
}

// --- 5 ------------------------------------------------------------------

Verdict reference_costs() {
  bool ok = true;
  std::string detail;
  for (const char* key : {"b2-ti8", "b2-s4-ti8", "b4-s8-ti16"}) {
    const auto ref = find_reference(key);
    const Deviation d = compare_table(count_params(*find_preset(key)), *ref);
    const bool g = std::abs(d.gflops_rel) <= 0.25, p = std::abs(d.mparams_rel) <= 0.15;
    ok = ok && g && p;
    std::cout << "    " << ref->notation << fmt(": GFLOPs %.1f vs %.0f (%+.1f%%%s), MParams %.1f vs %.0f (%+.1f%%%s)\n",
                                             d.gflops, d.gflops_ref, 100 * d.gflops_rel, g ? "" : ", out of range",
                                             d.mparams, d.mparams_ref, 100 * d.mparams_rel, p ? "" : ", out of range");
  }
  return {ok, "GFLOPs within 25% and MParams within 15% of the reference rows"};
}

// --- 6, 7 ---------------------------------------------------------------

double toy_accuracy(const MTVConfig& model, const SynthSpec& synth, std::uint64_t seed) {
  const SynthDataset data = generate(synth);
  TrainHyper h = default_train_hyper();
  h.seed = seed;
  return train(model, data.train, data.eval, h).history.back().eval_acc;
}

MTVConfig single_view(MTVConfig c, std::size_t view, std::size_t t) {
  c.views = {c.views[view]};
  c.views[0].tubelet.t = t;
  c.fusion.method = FusionMethod::kNone;
  c.fusion.layers.clear();
  return c;
}

Verdict multiview_beats_single() {
  const auto t0 = Clock::now();
  std::vector<double> mv, sv;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SynthSpec s;
    s.seed = seed;
    MTVConfig c = toy_model(s);
    c.seed = seed;
    mv.push_back(toy_accuracy(c, s, seed));
    sv.push_back(toy_accuracy(single_view(c, 0, 8), s, seed));
    std::cout << fmt("    seed %llu: multiview %.3f, t=8 single view %.3f\n", static_cast<unsigned long long>(seed),
                     mv.back(), sv.back());
  }
  const double gap = median3(mv) - median3(sv), s = seconds_since(t0);
  return {gap >= 0.05 && s < 900.0,
          fmt("median %.3f vs %.3f (gap %.1f points, need 5), %.0f s (limit 900 s)", median3(mv), median3(sv),
              100 * gap, s)};
}

Verdict whole_clip_tubelet_is_blind() {
  std::vector<double> acc;
  const SynthSpec base;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SynthSpec s;
    s.seed = seed;
    MTVConfig c = toy_model(s);
    c.seed = seed;
    acc.push_back(toy_accuracy(single_view(c, 0, s.shape.frames), s, seed));
  }
  const double bound = 1.0 / static_cast<double>(base.num_fast) + 0.05;
  return {median3(acc) <= bound, fmt("t=%zu single view median %.3f (seeds %.3f %.3f %.3f), bound %.3f",
                                     base.shape.frames, median3(acc), acc[0], acc[1], acc[2], bound)};
}

// --- 8 ------------------------------------------------------------------

Verdict token_counts() {
  std::mt19937_64 rng(20);
  std::size_t agree = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const ClipShape clip{2 + rng() % 24, 8 + rng() % 40, 8 + rng() % 40, 1 + rng() % 3};
    const TubeletSpec spec{1 + rng() % clip.frames, 1 + rng() % clip.height, 1 + rng() % clip.width};
    const auto n = count_tokens(clip, spec);
    const Tensor cut = extract_tubelets(random_clip(clip, 1), spec);
    const std::size_t formula = (clip.frames / spec.t) * (clip.height / spec.h) * (clip.width / spec.w);
    if (n.total == formula && cut.size(0) * cut.size(1) == formula) ++agree;
  }
  const ClipShape k{32, 224, 224, 3};
  const std::size_t a = count_tokens(k, {2, 16, 16}).total, b = count_tokens(k, {4, 16, 16}).total,
                    c = count_tokens(k, {8, 16, 16}).total;
  return {agree == 100 && a == 3136 && b == 1568 && c == 784,
          fmt("%zu/100 random shapes; 32x224x224 gives %zu/%zu/%zu", agree, a, b, c)};
}

// --- 9 ------------------------------------------------------------------

Verdict reproducible_training() {
  const fs::path dir = scratch_dir();
  std::ofstream(dir / "run.json") << R"({"synth": {"train_samples": 64, "eval_samples": 32}, "train": {"epochs": 3}})";
  std::ostringstream sink;
  for (const char* sub : {"a", "b"}) {
    cli::Options o;
    o.config = (dir / "run.json").string();
    o.out = (dir / sub).string();
    o.seed = 11;
    cli::cmd_train(o, sink);
  }
  const std::string csv = slurp(dir / "a" / "metrics.csv");
  const bool same_csv = !csv.empty() && csv == slurp(dir / "b" / "metrics.csv");

  // The checkpoint must reload to the exact trained tensors.
  const RunConfig rc = parse_run_config(slurp(dir / "a" / "config.resolved.json"));
  const SynthDataset data = cli::load_or_generate(rc);
  const TrainResult r = train(rc.model, data.train, data.eval, rc.train);
  const ModelParams loaded = load_checkpoint((dir / "a" / "model.ckpt").string());
  bool exact = loaded.named_parameters().size() == r.params.named_parameters().size();
  for (std::size_t i = 0; exact && i < loaded.named_parameters().size(); ++i)
    exact = bitwise_equal(loaded.named_parameters()[i].tensor, r.params.named_parameters()[i].tensor);
  save_checkpoint(loaded, (dir / "again.ckpt").string());
  const bool same_bytes = slurp(dir / "again.ckpt") == slurp(dir / "a" / "model.ckpt");
  fs::remove_all(dir);
  return {same_csv && exact && same_bytes,
          fmt("metrics.csv %s across runs, checkpoint round trip %s", same_csv ? "identical" : "DIFFERS",
              exact && same_bytes ? "bitwise exact" : "NOT exact")};
}

// --- 10 -----------------------------------------------------------------

Verdict fine_view_scaling() {
  MTVConfig c = *find_preset("b2-s4-ti8");
  const std::size_t fine = c.views.size() - 1;
  const auto n2 = count_tokens(c.clip, c.views[fine].tubelet).total;
  const auto f2 = count_params(c).total_flops;
  c.views[fine].tubelet.t = 4;
  const auto n4 = count_tokens(c.clip, c.views[fine].tubelet).total;
  const auto f4 = count_params(c).total_flops;
  // The same view swept over t = 1, 2, 4 (still the finest) moves FLOPs one way.
  std::vector<std::uint64_t> sweep;
  for (std::size_t t : {1, 2, 4}) {
    c.views[fine].tubelet.t = t;
    sweep.push_back(count_params(c).total_flops);
  }
  const bool monotone = sweep[0] > sweep[1] && sweep[1] > sweep[2];
  return {n2 == 2 * n4 && f4 < f2 && monotone,
          fmt("finest view %zu -> %zu tokens, %.1f -> %.1f GFLOPs, t sweep %s", n2, n4, f2 * 1e-9, f4 * 1e-9,
              monotone ? "monotone" : "NOT monotone")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mtv acceptance checks"};
  std::vector<int> only, expect_fail;
  app.add_option("--only", only, "run just these checks");
  app.add_option("--expect-fail", expect_fail, "checks known to fail; exit 0 if exactly these fail");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> checks{
      {"gradients match finite differences", gradients},
      {"zero-initialised fusion is an exact identity", zero_init_identity},
      {"factorised attention stays within a temporal index", factorized_locality},
      {"parameter counts match instantiated models", parameter_counts},
      {"costs match the reference rows", reference_costs},
      {"three-view toy model beats the t=8 single view", multiview_beats_single},
      {"whole-clip tubelet cannot see the fast factor", whole_clip_tubelet_is_blind},
      {"token counts follow the tiling formula", token_counts},
      {"training is reproducible and checkpoints are exact", reproducible_training},
      {"halving the finest view's tokens lowers FLOPs", fine_view_scaling},
  };

  std::set<int> failed;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      v = checks[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    if (!v.pass) failed.insert(id);
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << checks[i].first << " (" << v.detail
              << ")" << std::endl;
  }

  std::set<int> expected;
  for (int id : expect_fail)
    if (only.empty() || std::find(only.begin(), only.end(), id) != only.end()) expected.insert(id);
  std::cout << failed.size() << " failing";
  if (!expected.empty()) std::cout << ", " << expected.size() << " expected to fail";
  std::cout << std::endl;
  return failed == expected ? 0 : 1;
}
