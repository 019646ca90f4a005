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

#include "mtv/model.hpp"

// Binary layout (all integers and floats little-endian):
//
//   "MTVCKPT\0"              8-byte magic
//   u32 version
//   u64 n, n bytes           model config as JSON text
//   u64 count                number of parameter records
//   count x {
//     u32 n, n bytes         parameter name
//     u32 ndim, ndim x u64   shape
//     prod(shape) x f64      values
//   }

namespace mtv {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes to `path` via a temporary file and rename.
void save_checkpoint(const ModelParams& params, const std::string& path);

/// Rebuilds the model described by the file and restores its values.
ModelParams load_checkpoint(const std::string& path);

/// As above, but fails unless the stored config equals `expected`.
ModelParams load_checkpoint(const std::string& path, const MTVConfig& expected);

}  // namespace mtv
