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

#include "mtv_cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtv/analysis.hpp"
#include "mtv/checkpoint.hpp"
#include "mtv/errors.hpp"
#include "mtv/fusion.hpp"
#include "mtv/model.hpp"
#include "mtv/ops.hpp"
#include "mtv/presets.hpp"
#include "mtv/synth.hpp"
#include "mtv/training.hpp"

namespace fs = std::filesystem;

namespace mtv::cli {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write '" + tmp.string() + "'");
    os << text;
    if (!os) throw Error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void write_resolved(const RunConfig& rc) { write_atomic(fs::path(rc.out) / "config.resolved.json", run_config_to_json(rc) + "\n"); }

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Buffer data(shape_numel(shape));
  for (auto& v : data) v = n(rng);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

// Scalar probe <f(x), w> so every output coordinate carries gradient.
Tensor probe(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor(rng, y.shape());
  w.set_requires_grad(false);
  return ops::sum(ops::mul(y, w));
}

MTVConfig micro_config(std::uint64_t seed) {
  MTVConfig c;
  c.clip = {4, 16, 16, 1};
  ViewSpec coarse, fine;
  coarse.tubelet = {4, 8, 8};
  coarse.encoder = {1, 8, 16, 2};
  fine.tubelet = {2, 8, 8};
  fine.encoder = {1, 4, 8, 1};
  c.views = {coarse, fine};
  c.fusion.method = FusionMethod::kCva;
  c.fusion.layers = {0};
  c.global = {AggregatorKind::kTransformer, 1, 8, 16, 2};
  c.num_classes = 3;
  c.init_std = 0.3;
  c.seed = seed;
  return c;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

RunConfig resolve_config(const Options& o) {
  using json = nlohmann::ordered_json;
  json j = json::object();
  if (!o.config.empty()) {
    const std::string text = read_file(o.config);
    try {
      if (text.find_first_not_of(" \t\r\n") != std::string::npos) j = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError("malformed config '" + o.config + "': " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config '" + o.config + "' must be a JSON object");
  }
  if (!o.preset.empty()) j["preset"] = canonical_preset_name(o.preset);
  if (!o.out.empty()) j["out"] = o.out;
  RunConfig rc = parse_run_config(j.dump());
  if (o.seed) {
    rc.model.seed = *o.seed;
    rc.synth.seed = *o.seed;
    rc.train.seed = *o.seed;
  }
  return rc;
}

std::pair<std::size_t, std::size_t> parse_crops(const std::string& text) {
  const auto x = text.find_first_of("xX");
  std::size_t t = 0, s = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    t = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    s = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument(text);
  } catch (const std::logic_error&) {
    throw ConfigError("--crops expects TxS (e.g. 4x3), got '" + text + "'");
  }
  if (t == 0 || s == 0) throw ConfigError("--crops counts must be positive, got '" + text + "'");
  return {t, s};
}

SynthDataset load_or_generate(const RunConfig& rc) {
  if (!rc.data.empty()) return load_dataset(rc.data);
  return generate(rc.synth);
}

int cmd_count(const Options& o, std::ostream& out) {
  const RunConfig rc = resolve_config(o);
  const CostReport report = count_params(rc.model);
  std::optional<TableReference> ref;
  // Reference rows only describe the unmodified preset (the seed aside).
  bool pristine = false;
  if (!rc.preset.empty()) {
    MTVConfig as_preset = *find_preset(rc.preset);
    as_preset.seed = rc.model.seed;
    pristine = as_preset == rc.model;
    if (pristine) ref = find_reference(canonical_preset_name(rc.preset));
  }
  out << "model: " << (rc.preset.empty() ? "custom" : pristine ? rc.preset : rc.preset + " (modified)") << " (" << view_notation(rc.model) << ", "
      << to_string(rc.model.fusion.method) << " fusion)\n";
  const std::string text = format_report(report, ref);
  out << text;
  if (!o.out.empty()) {
    write_atomic(fs::path(rc.out) / "cost_report.txt", text);
    write_resolved(rc);
  }
  return kExitOk;
}

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckCase> cases;
  auto add = [&](std::string name, std::function<GradCheckResult()> fn) { cases.push_back({std::move(name), std::move(fn)}); };
  add("matmul", [seed] {
    std::mt19937_64 rng(seed);
    Tensor a = random_tensor(rng, {2, 3, 4}), b = random_tensor(rng, {4, 5});
    return finite_diff_check([=] { return probe(ops::matmul(a, b), seed); }, {{"a", a}, {"b", b}});
  });
  add("elementwise", [seed] {
    std::mt19937_64 rng(seed + 1);
    Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4});
    return finite_diff_check(
        [=] { return probe(ops::scale(ops::sub(ops::mul(a, b), ops::add(a, b)), 0.7), seed); }, {{"a", a}, {"b", b}});
  });
  add("reductions", [seed] {
    std::mt19937_64 rng(seed + 2);
    Tensor a = random_tensor(rng, {3, 4, 2});
    return finite_diff_check([=] { return ops::add(probe(ops::mean(a, 1), seed), ops::mean(ops::mul(a, a))); }, {{"a", a}});
  });
  add("softmax", [seed] {
    std::mt19937_64 rng(seed + 3);
    Tensor a = random_tensor(rng, {3, 5});
    return finite_diff_check([=] { return ops::add(probe(ops::softmax(a, -1), seed), probe(ops::log_softmax(a, 0), seed + 1)); },
                             {{"a", a}});
  });
  add("layer_norm", [seed] {
    std::mt19937_64 rng(seed + 4);
    Tensor x = random_tensor(rng, {3, 6}), g = random_tensor(rng, {6}), b = random_tensor(rng, {6});
    return finite_diff_check([=] { return probe(ops::layer_norm(x, g, b), seed); }, {{"x", x}, {"gamma", g}, {"beta", b}});
  });
  add("gelu", [seed] {
    std::mt19937_64 rng(seed + 5);
    Tensor x = random_tensor(rng, {4, 5}, 2.0);
    return finite_diff_check([=] { return probe(ops::gelu(x), seed); }, {{"x", x}});
  });
  add("shape_ops", [seed] {
    std::mt19937_64 rng(seed + 6);
    Tensor a = random_tensor(rng, {2, 3, 4}), b = random_tensor(rng, {2, 1, 4}), c = random_tensor(rng, {4});
    return finite_diff_check(
        [=] {
          Tensor y = ops::concat({a, b}, 1);
          y = ops::transpose(ops::slice(y, 1, 1, 4), 0, 2);
          y = ops::add(ops::reshape(y, {4, 6}), ops::reshape(ops::expand(c, {6}), {4, 6}));
          return probe(y, seed);
        },
        {{"a", a}, {"b", b}, {"c", c}});
  });
  add("linear", [seed] {
    std::mt19937_64 rng(seed + 7);
    Tensor x = random_tensor(rng, {2, 3, 4}), w = random_tensor(rng, {4, 5}), b = random_tensor(rng, {5});
    return finite_diff_check([=] { return probe(ops::linear(x, w, b), seed); }, {{"x", x}, {"w", w}, {"b", b}});
  });
  add("cross_entropy", [seed] {
    std::mt19937_64 rng(seed + 8);
    Tensor z = random_tensor(rng, {4, 3});
    const std::vector<int> labels{0, 2, 1, 2};
    return finite_diff_check([=] { return ops::cross_entropy(z, labels, 0.1); }, {{"logits", z}});
  });
  add("attention", [seed] {
    std::mt19937_64 rng(seed + 9);
    Tensor q = random_tensor(rng, {2, 3, 4}), k = random_tensor(rng, {2, 5, 4}), v = random_tensor(rng, {2, 5, 4});
    return finite_diff_check([=] { return probe(ops::attention(q, k, v, 2), seed); }, {{"q", q}, {"k", k}, {"v", v}});
  });
  add("tubelet_embedding", [seed] {
    std::mt19937_64 rng(seed + 10);
    ViewSpec v;
    v.tubelet = {2, 2, 2};
    v.encoder = {1, 3, 6, 1};
    Tensor clip = random_tensor(rng, {4, 4, 4, 1});
    EmbeddingParams p{random_tensor(rng, {8, 3}), random_tensor(rng, {3}), random_tensor(rng, {2, 5, 3}),
                      random_tensor(rng, {3})};
    return finite_diff_check([=] { return probe(tokenize_view(clip, v, p).tokens, seed); },
                             {{"clip", clip}, {"proj", p.proj}, {"bias", p.bias}, {"pos", p.pos}, {"cls", p.cls}});
  });
  add("cross_view_attention", [seed] {
    std::mt19937_64 rng(seed + 11);
    Tensor zc = random_tensor(rng, {1, 2, 2, 4}), zf = random_tensor(rng, {1, 4, 2, 2});
    CvaParams p{random_tensor(rng, {2, 4}, 0.5), random_tensor(rng, {4, 4}, 0.5), random_tensor(rng, {4, 4}, 0.5),
                random_tensor(rng, {4, 4}, 0.5)};
    return finite_diff_check([=] { return probe(cva({zc, 0}, {zf, 1}, p, 2).tokens, seed); },
                             {{"coarse", zc}, {"fine", zf}, {"proj", p.proj}, {"wq", p.wq}, {"wk", p.wk}, {"wv", p.wv}});
  });
  add("micro_mtv", [seed] {
    ModelParams m = build_model(micro_config(seed));
    std::mt19937_64 rng(seed + 12);
    std::normal_distribution<double> n(0.0, 0.2);
    for (const auto& p : m.named_parameters()) {
      Tensor t = p.tensor;
      for (auto& v : t.mutable_data()) v += n(rng);  // leave the zero init so every path carries gradient
      t.set_requires_grad(true);
    }
    Tensor clip = random_tensor(rng, {2, 4, 16, 16, 1}, 0.5);
    clip.set_requires_grad(false);
    const std::vector<int> labels{0, 2};
    return finite_diff_check([&m, clip, labels] { return ops::cross_entropy(forward(m, clip), labels); },
                             m.named_parameters());
  });
  return cases;
}

int run_gradcheck(const std::vector<GradCheckCase>& cases, std::ostream& out, double tolerance) {
  bool ok = true;
  for (const auto& c : cases) {
    const GradCheckResult r = c.run();
    const bool pass = r.max_error < tolerance;
    ok = ok && pass;
    char line[256];
    std::snprintf(line, sizeof(line), "%-22s %-4s max_rel_err=%.3e coords=%zu", c.name.c_str(), pass ? "ok" : "FAIL",
                  r.max_error, r.coordinates_checked);
    out << line;
    if (!pass) {
      std::snprintf(line, sizeof(line), " worst=%s[%zu] analytic=%.9g numeric=%.9g", r.worst_tensor.c_str(),
                    r.worst_index, r.worst_analytic, r.worst_numeric);
      out << line;
    }
    out << "\n";
  }
  out << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << tolerance << ")\n";
  return ok ? kExitOk : kExitFailure;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  std::uint64_t seed = 0;
  if (!o.config.empty()) seed = resolve_config(o).model.seed;
  if (o.seed) seed = *o.seed;
  return run_gradcheck(gradcheck_suite(seed), out);
}

int cmd_synth(const Options& o, std::ostream& out) {
  const RunConfig rc = resolve_config(o);
  const SynthDataset data = generate(rc.synth);
  save_dataset(data, rc.out);
  write_resolved(rc);
  out << "wrote " << data.train.size() << " train / " << data.eval.size() << " eval clips of "
      << rc.synth.shape.frames << "x" << rc.synth.shape.height << "x" << rc.synth.shape.width << "x"
      << rc.synth.shape.channels << " (" << rc.synth.num_classes() << " classes) to " << rc.out << "\n";
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig rc = resolve_config(o);
  const SynthDataset data = load_or_generate(rc);
  if (!(data.train.shape == rc.model.clip)) {
    throw ConfigError("dataset clips do not match model.clip; set model.clip or synth.shape");
  }
  if (data.spec.num_classes() != rc.model.num_classes) {
    throw ConfigError("model.num_classes is " + std::to_string(rc.model.num_classes) + " but the dataset has " +
                      std::to_string(data.spec.num_classes()) + " classes");
  }
  fs::create_directories(rc.out);
  write_resolved(rc);
  std::string csv = metrics_csv_header() + "\n";
  const TrainResult result = train(rc.model, data.train, data.eval, rc.train, [&](const EpochMetrics& m) {
    csv += metrics_csv_row(m) + "\n";
    out << "epoch " << m.epoch << " loss " << fmt("%.4f", m.train_loss) << " train_acc " << fmt("%.3f", m.train_acc)
        << " eval_acc " << fmt("%.3f", m.eval_acc) << "\n";
  });
  write_atomic(fs::path(rc.out) / "metrics.csv", csv);
  save_checkpoint(result.params, (fs::path(rc.out) / "model.ckpt").string());
  out << "checkpoint " << (fs::path(rc.out) / "model.ckpt").string() << "\n";
  if (!result.history.empty()) out << "final eval_acc " << fmt("%.4f", result.history.back().eval_acc) << "\n";
  return kExitOk;
}

EnsembleResult ensemble_accuracy(const std::vector<std::string>& checkpoints, const Dataset& data,
                                 std::size_t temporal_crops, std::size_t spatial_crops) {
  if (checkpoints.empty()) throw ConfigError("at least one --checkpoint is required");
  EnsembleResult r;
  Tensor total;
  auto accuracy = [&](const Tensor& p) {
    const std::size_t C = p.size(1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto row = p.data().subspan(i * C, C);
      if (std::max_element(row.begin(), row.end()) - row.begin() == data.labels[i]) ++correct;
    }
    return data.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
  };
  for (const auto& path : checkpoints) {
    const ModelParams m = load_checkpoint(path);
    Tensor p = predict(m, data, temporal_crops, spatial_crops);
    if (total.defined() && p.shape() != total.shape()) throw ConfigError("ensemble members disagree on the class count");
    r.member_accuracy.push_back(accuracy(p));
    total = total.defined() ? ops::add(total, p) : p;
  }
  r.accuracy = accuracy(total);
  return r;
}

namespace {

const Dataset& pick_split(const SynthDataset& d, const std::string& split) {
  if (split == "eval") return d.eval;
  if (split == "train") return d.train;
  throw ConfigError("--split must be 'train' or 'eval', got '" + split + "'");
}

}  // namespace

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.checkpoints.size() != 1) throw ConfigError("eval takes exactly one --checkpoint");
  const RunConfig rc = resolve_config(o);
  const SynthDataset data = load_or_generate(rc);
  const auto r = ensemble_accuracy(o.checkpoints, pick_split(data, o.split), o.temporal_crops, o.spatial_crops);
  out << "split=" << o.split << "\ncrops=" << o.temporal_crops << "x" << o.spatial_crops << "\naccuracy="
      << fmt("%.6f", r.accuracy) << "\n";
  return kExitOk;
}

int cmd_ensemble(const Options& o, std::ostream& out) {
  const RunConfig rc = resolve_config(o);
  const SynthDataset data = load_or_generate(rc);
  const auto r = ensemble_accuracy(o.checkpoints, pick_split(data, o.split), o.temporal_crops, o.spatial_crops);
  for (std::size_t i = 0; i < r.member_accuracy.size(); ++i) {
    out << "member " << o.checkpoints[i] << " accuracy=" << fmt("%.6f", r.member_accuracy[i]) << "\n";
  }
  out << "split=" << o.split << "\ncrops=" << o.temporal_crops << "x" << o.spatial_crops << "\naccuracy="
      << fmt("%.6f", r.accuracy) << "\n";
  return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiview video transformer toolkit"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  std::string crops;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run config");
    sub->add_option("--out", o.out, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "seed for model, data and training");
    sub->add_option("--preset", o.preset, "named model preset");
  };
  auto add_eval = [&](CLI::App* sub, bool many) {
    auto* c = sub->add_option("--checkpoint", o.checkpoints, many ? "checkpoint file (repeatable)" : "checkpoint file");
    c->required();
    if (many) c->allow_extra_args(false);
    sub->add_option("--crops", crops, "temporal x spatial crops, e.g. 4x3");
    sub->add_option("--split", o.split, "dataset split: eval or train");
  };
  auto* count = app.add_subcommand("count", "parameter and FLOP report");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  auto* trn = app.add_subcommand("train", "train a model");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* ens = app.add_subcommand("ensemble", "evaluate summed probabilities of checkpoints");
  for (auto* s : {count, grad, synth, trn, ev, ens}) add_common(s);
  add_eval(ev, false);
  add_eval(ens, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "mtv: " << e.what() << "\n";
    return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
  }
  for (auto* s : {count, grad, synth, trn, ev, ens}) {
    if (s->parsed() && s->count("--seed") > 0) o.seed = seed;
  }

  try {
    if (!crops.empty()) std::tie(o.temporal_crops, o.spatial_crops) = parse_crops(crops);
    if (count->parsed()) return cmd_count(o, out);
    if (grad->parsed()) return cmd_gradcheck(o, out);
    if (synth->parsed()) return cmd_synth(o, out);
    if (trn->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (ens->parsed()) return cmd_ensemble(o, out);
  } catch (const ConfigError& e) {
    err << "mtv: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "mtv: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace mtv::cli
