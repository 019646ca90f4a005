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

#include <cstddef>
#include <cstdint>
#include <string>

#include "mtv/config.hpp"
#include "mtv/training.hpp"

// Synthetic two-factor video classification. Every clip is
//
//   slow_amplitude * A_s  +  fast_amplitude * sign_k * (+/-) B_f  +  noise
//
// where A_s is one of S static spatial textures, and B_f one of F spatial
// patterns whose polarity alternates between the two frames of every frame
// pair k, with an independent random sign_k per pair. Label = s * F + f.
// The fast term sums to zero over each frame pair, so any temporal average
// over whole pairs removes it, while a 2-frame tubelet sees it directly.
// The default fast amplitude is weak enough that one pair alone is a poor
// cue: a model must rectify and pool the evidence of many pairs, which a
// linear tubelet spanning several random-sign pairs cannot do cheaply.

namespace mtv {

struct SynthSpec {
  ClipShape shape{16, 32, 32, 1};
  std::size_t num_slow = 4;
  std::size_t num_fast = 4;
  double noise_std = 0.3;
  double slow_amplitude = 0.15;
  double fast_amplitude = 0.08;
  std::size_t train_samples = 2000;
  std::size_t eval_samples = 500;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return num_slow * num_fast; }
  void validate() const;
  bool operator==(const SynthSpec&) const = default;
};

struct SynthDataset {
  SynthSpec spec;
  Dataset train;
  Dataset eval;
};

/// Deterministic under spec.seed. Values are zero-centred and rounded to
/// float precision (the on-disk format).
SynthDataset generate(const SynthSpec& spec);

/// One split of `count` samples; split 0 is train, 1 is eval.
Dataset generate_split(const SynthSpec& spec, std::size_t split, std::size_t count);

struct AccuracyBounds {
  double slow_only = 0.0;  // ceiling of an observer that cannot see the fast factor: 1 / F
  double fast_only = 0.0;  // ceiling of an observer that cannot see the slow factor: 1 / S
};

AccuracyBounds oracle_accuracy_bounds(const SynthSpec& spec);

/// Directory layout: manifest.json (spec, seed, labels, file names) plus
/// train.f32 / eval.f32 holding raw little-endian float32 clips.
void save_dataset(const SynthDataset& data, const std::string& dir);
SynthDataset load_dataset(const std::string& dir);

/// JSON text of a spec (and the parse of a possibly partial one, with
/// defaults for missing keys; unknown keys are rejected).
std::string synth_spec_to_json(const SynthSpec& spec, int indent = 2);
SynthSpec synth_spec_from_json(std::string_view text);

}  // namespace mtv
