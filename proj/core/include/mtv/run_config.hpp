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

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "mtv/config.hpp"
#include "mtv/synth.hpp"
#include "mtv/training.hpp"

// A run config is one JSON document:
//
//   {
//     "preset": "b2-s4-ti8",        optional named model
//     "model":  { ... },            overrides on top of the preset (or the toy default)
//     "synth":  { ... },            synthetic dataset spec
//     "train":  { ... },            optimisation hyperparameters
//     "data":   "dir",              optional dataset directory (else generated)
//     "out":    "dir"               output directory
//   }
//
// Without a preset the model defaults to the three-view tiny toy model on
// the synthetic clip shape. Unknown keys are errors.

namespace mtv {

struct RunConfig {
  std::string preset;
  MTVConfig model;
  SynthSpec synth;
  TrainHyper train;
  std::string data;
  std::string out = "out";

  bool operator==(const RunConfig& other) const;
};

/// Three views (t = 8 / 4 / 2, widths 16 / 24 / 32, two layers each) on
/// 16x16 spatial tubelets, CVA at the last layer, one global layer, and
/// init_std 0.1.
MTVConfig toy_model(const SynthSpec& synth);

/// The Kinetics recipe (SGD, momentum 0.9, 2.5 warmup epochs, 30 epochs,
/// droplayer 0.1) with the base learning rate lowered to 0.01 for the toy.
TrainHyper default_train_hyper();

RunConfig parse_run_config(std::string_view text);
/// The fully materialised config; parsing it yields an equal RunConfig.
std::string run_config_to_json(const RunConfig& config, int indent = 2);

std::string train_hyper_to_json(const TrainHyper& hyper, int indent = 2);

}  // namespace mtv
