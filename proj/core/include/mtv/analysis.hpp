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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtv/config.hpp"

// Closed-form parameter and FLOP accounting. Only multiply-accumulates of
// the linear maps and attention products are counted; norms, softmax,
// GeLU and additions are ignored.

namespace mtv {

struct CostEntry {
  int view = -1;  // -1: shared (global encoder, head)
  std::string component;
  std::size_t tokens = 0;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct CostReport {
  std::uint64_t total_params = 0;
  std::uint64_t total_macs = 0;
  std::uint64_t total_flops = 0;  // total_macs * flops_per_mac
  int flops_per_mac = 2;
  std::string flop_convention = "2 FLOPs per multiply-accumulate";
  std::vector<CostEntry> breakdown;

  double gflops() const { return static_cast<double>(total_flops) * 1e-9; }
  double mparams() const { return static_cast<double>(total_params) * 1e-6; }
  /// GFLOPs under another convention.
  double gflops_at(int per_mac) const { return static_cast<double>(total_macs) * per_mac * 1e-9; }
};

/// Parameter counts (and FLOPs) on the config's own clip size.
CostReport count_params(const MTVConfig& config);

/// FLOPs of one forward pass on a clip of shape `clip` (the positional
/// tables, and hence the parameter count, follow that shape too).
CostReport count_flops(const MTVConfig& config, const ClipShape& clip);

/// A reference cost row for one preset.
struct TableReference {
  std::string key;       // preset name
  std::string notation;  // e.g. "B/2+Ti/8"
  std::string method;    // fusion method label
  double gflops = 0;
  double mparams = 0;
  int flops_per_mac = 1;  // convention the row's GFLOPs are read in
};

const std::vector<TableReference>& table_references();
std::optional<TableReference> find_reference(std::string_view key);

struct Deviation {
  double gflops = 0;  // model, in the reference's convention
  double gflops_ref = 0;
  double gflops_rel = 0;  // (model - ref) / ref
  double mparams = 0;
  double mparams_ref = 0;
  double mparams_rel = 0;
};

Deviation compare_table(const CostReport& report, const TableReference& reference);

/// Human-readable table followed by `key=value` records.
std::string format_report(const CostReport& report, const std::optional<TableReference>& reference = {});

}  // namespace mtv
