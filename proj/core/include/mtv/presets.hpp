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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtv/config.hpp"

// Named variants. A name lists views finest first as <backbone><t>, joined
// by '-' (e.g. "b2-s4-ti8" is a Base view on 2-frame tubelets, a Small view
// on 4-frame tubelets and a Tiny view on 8-frame tubelets), optionally
// followed by a fusion suffix: -cva (default), -late, -mlp, -bottleneck,
// or -unfact for the unfactorized encoder with an MLP aggregator.
//
// All presets use 32x224x224x3 clips, 400 classes and 16x16 spatial
// tubelets (14x14 for Huge views). Multiview global encoders are 12 Base
// layers with 8 heads; a single-view model uses a global encoder of its own
// backbone, as in a factorised video transformer.

namespace mtv {

/// The canonical preset names (aliases excluded).
std::vector<std::string> preset_names();

/// Resolves aliases (mtv-b, mtv-b-2s4ti8, mtv-l, mtv-h) to canonical names.
std::string canonical_preset_name(std::string_view name);

/// Config for `name`, or nullopt when the name does not parse.
std::optional<MTVConfig> find_preset(std::string_view name);

/// "B/2+S/4+Ti/8"-style notation of a config's views, finest first.
std::string view_notation(const MTVConfig& config);

}  // namespace mtv
