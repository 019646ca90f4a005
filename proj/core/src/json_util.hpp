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

// Private JSON helpers shared by the config, run-config and dataset code.

#include <initializer_list>
#include <string>

#include "json.hpp"
#include "mtv/config.hpp"
#include "mtv/errors.hpp"
#include "mtv/synth.hpp"

namespace mtv::detail {

using json = nlohmann::ordered_json;

/// Rejects any key of object `j` not listed in `allowed`, naming it.
inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + where + "." + it.key() + "'");
  }
}

/// Reads `key` into `out` when present, converting type errors to ConfigError.
template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + where + "." + key + "'");
  }
}

json clip_to_json(const ClipShape& c);
ClipShape clip_from_json(const json& j, const std::string& where, ClipShape defaults);
json model_to_json(const MTVConfig& config);
/// Overlays the keys present in `j` onto `defaults`.
MTVConfig model_from_json(const json& j, const std::string& where, MTVConfig defaults);
json synth_to_json(const SynthSpec& spec);
SynthSpec synth_from_json(const json& j, const std::string& where, SynthSpec defaults);

}  // namespace mtv::detail
