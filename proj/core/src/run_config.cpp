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

#include "mtv/run_config.hpp"

#include "json_util.hpp"
#include "mtv/errors.hpp"
#include "mtv/presets.hpp"

namespace mtv {

namespace {

ViewSpec toy_view(std::size_t t, std::size_t d, std::size_t heads) {
  ViewSpec v;
  v.tubelet = {t, 16, 16};
  v.encoder = {2, d, 4 * d, heads};
  return v;
}

}  // namespace

MTVConfig toy_model(const SynthSpec& synth) {
  MTVConfig c;
  c.clip = synth.shape;
  c.views = {toy_view(8, 16, 2), toy_view(4, 24, 3), toy_view(2, 32, 4)};
  c.fusion.method = FusionMethod::kCva;
  c.fusion.layers = {1};
  c.global = {AggregatorKind::kTransformer, 1, 32, 128, 8};
  c.num_classes = synth.num_classes();
  // At widths of 16 to 32 the ViT-B init scale of 0.02 leaves SGD stuck on
  // the small-weight saddle for most of a 30-epoch run.
  c.init_std = 0.1;
  c.seed = synth.seed;
  return c;
}

TrainHyper default_train_hyper() {
  TrainHyper h;
  h.base_lr = 0.01;
  return h;
}

namespace {

detail::json hyper_to_json(const TrainHyper& h) {
  return {{"base_lr", h.base_lr},
          {"momentum", h.momentum},
          {"warmup_epochs", h.warmup_epochs},
          {"epochs", h.epochs},
          {"batch_size", h.batch_size},
          {"label_smoothing", h.label_smoothing},
          {"droplayer_rate", h.droplayer_rate},
          {"eval_crops", {h.eval_temporal_crops, h.eval_spatial_crops}},
          {"seed", h.seed}};
}

TrainHyper hyper_from_json(const detail::json& j, const std::string& where, TrainHyper h) {
  detail::check_keys(j, where, {"base_lr", "momentum", "warmup_epochs", "epochs", "batch_size", "label_smoothing",
                                "droplayer_rate", "eval_crops", "seed"});
  detail::read(j, "base_lr", h.base_lr, where);
  detail::read(j, "momentum", h.momentum, where);
  detail::read(j, "warmup_epochs", h.warmup_epochs, where);
  detail::read(j, "epochs", h.epochs, where);
  detail::read(j, "batch_size", h.batch_size, where);
  detail::read(j, "label_smoothing", h.label_smoothing, where);
  detail::read(j, "droplayer_rate", h.droplayer_rate, where);
  detail::read(j, "seed", h.seed, where);
  if (j.contains("eval_crops")) {
    const auto& c = j.at("eval_crops");
    if (!c.is_array() || c.size() != 2) throw ConfigError("'" + where + ".eval_crops' must be [temporal, spatial]");
    h.eval_temporal_crops = c[0].get<std::size_t>();
    h.eval_spatial_crops = c[1].get<std::size_t>();
  }
  if (h.batch_size == 0) throw ConfigError("'" + where + ".batch_size' must be positive");
  if (h.eval_temporal_crops == 0 || h.eval_spatial_crops == 0) throw ConfigError("eval crop counts must be positive");
  if (!(h.label_smoothing >= 0.0 && h.label_smoothing < 1.0)) throw ConfigError("label_smoothing must lie in [0, 1)");
  return h;
}

RunConfig resolve(const detail::json& j) {
  detail::check_keys(j, "config", {"preset", "model", "synth", "train", "data", "out"});
  RunConfig rc;
  detail::read(j, "preset", rc.preset, "config");
  detail::read(j, "data", rc.data, "config");
  detail::read(j, "out", rc.out, "config");
  if (j.contains("synth")) rc.synth = detail::synth_from_json(j.at("synth"), "synth", rc.synth);
  rc.synth.validate();
  if (!rc.preset.empty()) {
    auto p = find_preset(rc.preset);
    if (!p) throw ConfigError("unknown preset '" + rc.preset + "'");
    rc.model = *p;
  } else {
    rc.model = toy_model(rc.synth);
  }
  if (j.contains("model")) rc.model = detail::model_from_json(j.at("model"), "model", rc.model);
  rc.model.validate();
  rc.train = default_train_hyper();
  if (j.contains("train")) rc.train = hyper_from_json(j.at("train"), "train", rc.train);
  return rc;
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const {
  const auto& a = train;
  const auto& b = o.train;
  const bool same_train = a.base_lr == b.base_lr && a.momentum == b.momentum && a.warmup_epochs == b.warmup_epochs &&
                          a.epochs == b.epochs && a.batch_size == b.batch_size &&
                          a.label_smoothing == b.label_smoothing && a.droplayer_rate == b.droplayer_rate &&
                          a.eval_temporal_crops == b.eval_temporal_crops &&
                          a.eval_spatial_crops == b.eval_spatial_crops && a.seed == b.seed;
  return same_train && preset == o.preset && model == o.model && synth == o.synth && data == o.data && out == o.out;
}

RunConfig parse_run_config(std::string_view text) {
  detail::json j;
  try {
    j = text.find_first_not_of(" \t\r\n") == std::string_view::npos ? detail::json::object()
                                                                      : detail::json::parse(text);
  } catch (const detail::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  try {
    return resolve(j);
  } catch (const detail::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

std::string run_config_to_json(const RunConfig& rc, int indent) {
  detail::json j;
  if (!rc.preset.empty()) j["preset"] = rc.preset;
  j["model"] = detail::model_to_json(rc.model);
  j["synth"] = detail::synth_to_json(rc.synth);
  j["train"] = hyper_to_json(rc.train);
  if (!rc.data.empty()) j["data"] = rc.data;
  j["out"] = rc.out;
  return j.dump(indent);
}

std::string train_hyper_to_json(const TrainHyper& hyper, int indent) { return hyper_to_json(hyper).dump(indent); }

}  // namespace mtv
