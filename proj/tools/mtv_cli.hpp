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
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mtv/gradcheck.hpp"
#include "mtv/run_config.hpp"

// The `mtv` command-line verbs as a library, so tests can drive them
// in-process. Every cmd_* throws mtv::Error subclasses; run() maps them to
// exit codes.

namespace mtv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // runtime failure, failed check, unreadable file
inline constexpr int kExitConfig = 2;   // bad flags or config

struct Options {
  std::string config;  // path of the JSON run config ("" = defaults)
  std::string out;     // overrides the config's "out"
  std::string preset;  // overrides the config's "preset"
  std::optional<std::uint64_t> seed;  // sets model, data and training seeds
  std::size_t temporal_crops = 1;
  std::size_t spatial_crops = 1;
  std::vector<std::string> checkpoints;
  std::string split = "eval";  // dataset split for eval / ensemble
};

/// Reads the config file and applies the flag overrides.
RunConfig resolve_config(const Options& options);

/// Parses "TxS" (e.g. "4x3").
std::pair<std::size_t, std::size_t> parse_crops(const std::string& text);

int cmd_count(const Options& options, std::ostream& out);
int cmd_gradcheck(const Options& options, std::ostream& out);
int cmd_synth(const Options& options, std::ostream& out);
int cmd_train(const Options& options, std::ostream& out);
int cmd_eval(const Options& options, std::ostream& out);
int cmd_ensemble(const Options& options, std::ostream& out);

struct GradCheckCase {
  std::string name;
  std::function<GradCheckResult()> run;
};

/// One finite-difference case per op family plus an end-to-end micro model.
std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed);

/// Prints one line per case; returns kExitOk iff every error is below `tolerance`.
int run_gradcheck(const std::vector<GradCheckCase>& cases, std::ostream& out, double tolerance = 1e-4);

/// Accuracy of the summed class probabilities of several checkpoints on the
/// configured dataset split; `member_accuracy` holds each model alone.
struct EnsembleResult {
  double accuracy = 0.0;
  std::vector<double> member_accuracy;
};
EnsembleResult ensemble_accuracy(const std::vector<std::string>& checkpoints, const Dataset& data,
                                 std::size_t temporal_crops, std::size_t spatial_crops);

/// The dataset a run config points at: loaded from "data", else generated.
SynthDataset load_or_generate(const RunConfig& config);

/// Parses argv (verb first) and runs it. Errors go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mtv::cli
