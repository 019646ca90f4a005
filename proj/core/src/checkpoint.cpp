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

#include "mtv/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mtv/errors.hpp"

namespace mtv {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'V', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put(std::ostream& os, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get(std::istream& is, const std::string& path) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw LoadError(path + ": truncated checkpoint");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

std::string get_string(std::istream& is, std::uint64_t n, const std::string& path) {
  if (n > (1u << 30)) throw LoadError(path + ": implausible string length");
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) throw LoadError(path + ": truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open '" + tmp + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kCheckpointVersion);
    const std::string cfg = model_config_to_json(params.config);
    put<std::uint64_t>(os, cfg.size());
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    const auto& named = params.named_parameters();
    put<std::uint64_t>(os, named.size());
    for (const auto& p : named) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
      os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      const auto& shape = p.tensor.shape();
      put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
      for (auto e : shape) put<std::uint64_t>(os, e);
      for (double v : p.tensor.data()) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) throw Error("failed writing '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open checkpoint '" + path + "'");
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw LoadError(path + ": not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw LoadError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::string cfg_text = get_string(is, get<std::uint64_t>(is, path), path);
  MTVConfig cfg;
  try {
    cfg = model_config_from_json(cfg_text);
  } catch (const ConfigError& e) {
    throw LoadError(path + ": stored config is invalid: " + e.what());
  }
  ModelParams params = build_model(cfg);
  const auto& named = params.named_parameters();
  const auto count = get<std::uint64_t>(is, path);
  if (count != named.size()) {
    throw LoadError(path + ": " + std::to_string(count) + " parameter records, model expects " +
                    std::to_string(named.size()));
  }
  for (const auto& p : named) {
    const std::string name = get_string(is, get<std::uint32_t>(is, path), path);
    if (name != p.name) throw LoadError(path + ": expected parameter '" + p.name + "', found '" + name + "'");
    const auto ndim = get<std::uint32_t>(is, path);
    Shape shape(ndim);
    for (auto& e : shape) e = get<std::uint64_t>(is, path);
    if (shape != p.tensor.shape()) {
      throw LoadError(path + ": parameter '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                      shape_str(p.tensor.shape()));
    }
    Tensor target = p.tensor;
    for (auto& v : target.mutable_data()) v = std::bit_cast<double>(get<std::uint64_t>(is, path));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw LoadError(path + ": trailing bytes after parameters");
  return params;
}

ModelParams load_checkpoint(const std::string& path, const MTVConfig& expected) {
  ModelParams params = load_checkpoint(path);
  if (!(params.config == expected)) {
    throw LoadError(path + ": checkpoint config does not match the requested model (stored " +
                    std::to_string(params.config.views.size()) + " views, requested " +
                    std::to_string(expected.views.size()) + ")");
  }
  return params;
}

}  // namespace mtv
