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

#include "mtv/synth.hpp"

#include <algorithm>
#include <bit>
#include <filesystem>
#include <fstream>
#include <random>

#include "json_util.hpp"
#include "mtv/errors.hpp"

namespace mtv {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Blocky +/-1 texture over H x W (blocks of H/8 x W/8 pixels).
std::vector<double> texture(std::mt19937_64& rng, std::size_t H, std::size_t W) {
  const std::size_t bh = std::max<std::size_t>(1, H / 8), bw = std::max<std::size_t>(1, W / 8);
  const std::size_t gh = (H + bh - 1) / bh, gw = (W + bw - 1) / bw;
  std::vector<double> grid(gh * gw);
  for (auto& g : grid) g = (rng() & 1) ? 1.0 : -1.0;
  std::vector<double> out(H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) out[y * W + x] = grid[(y / bh) * gw + x / bw];
  return out;
}

struct Patterns {
  std::vector<std::vector<double>> slow, fast;
};

Patterns make_patterns(const SynthSpec& spec) {
  std::mt19937_64 rng(splitmix(spec.seed ^ 0x5157a7e5ULL));
  Patterns p;
  for (std::size_t s = 0; s < spec.num_slow; ++s) p.slow.push_back(texture(rng, spec.shape.height, spec.shape.width));
  for (std::size_t f = 0; f < spec.num_fast; ++f) p.fast.push_back(texture(rng, spec.shape.height, spec.shape.width));
  return p;
}

}  // namespace

void SynthSpec::validate() const {
  if (shape.frames == 0 || shape.height == 0 || shape.width == 0 || shape.channels == 0) {
    throw ConfigError("synthetic clip extents must be positive");
  }
  if (num_slow == 0 || num_fast == 0) throw ConfigError("num_slow and num_fast must be positive");
  if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
}

Dataset generate_split(const SynthSpec& spec, std::size_t split, std::size_t count) {
  spec.validate();
  const Patterns pat = make_patterns(spec);
  const auto& sh = spec.shape;
  const std::size_t HW = sh.height * sh.width;
  const std::size_t n = sh.frames * HW * sh.channels;
  const std::size_t C = spec.num_classes();
  Dataset d;
  d.shape = sh;
  d.clips.resize(count * n);
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % C);
    d.labels[i] = label;
    const std::size_t s = static_cast<std::size_t>(label) / spec.num_fast;
    const std::size_t f = static_cast<std::size_t>(label) % spec.num_fast;
    std::mt19937_64 rng(splitmix(splitmix(spec.seed) ^ splitmix((split << 40) ^ i)));
    std::normal_distribution<double> noise(0.0, 1.0);
    double* clip = d.clips.data() + i * n;
    double pair_sign = 1.0;
    for (std::size_t t = 0; t < sh.frames; ++t) {
      // an unpaired trailing frame carries no fast pattern
      double polarity = 0.0;
      if (t % 2 == 1 || t + 1 < sh.frames) {
        if (t % 2 == 0) pair_sign = (rng() & 1) ? 1.0 : -1.0;
        polarity = t % 2 == 0 ? pair_sign : -pair_sign;
      }
      for (std::size_t p = 0; p < HW; ++p) {
        const double base = spec.slow_amplitude * pat.slow[s][p] + spec.fast_amplitude * polarity * pat.fast[f][p];
        for (std::size_t c = 0; c < sh.channels; ++c) {
          const double v = base + spec.noise_std * noise(rng);
          clip[(t * HW + p) * sh.channels + c] = static_cast<double>(static_cast<float>(v));
        }
      }
    }
  }
  return d;
}

SynthDataset generate(const SynthSpec& spec) {
  return {spec, generate_split(spec, 0, spec.train_samples), generate_split(spec, 1, spec.eval_samples)};
}

AccuracyBounds oracle_accuracy_bounds(const SynthSpec& spec) {
  spec.validate();
  return {1.0 / static_cast<double>(spec.num_fast), 1.0 / static_cast<double>(spec.num_slow)};
}

namespace detail {

json synth_to_json(const SynthSpec& s) {
  return {{"shape", clip_to_json(s.shape)},
          {"num_slow", s.num_slow},
          {"num_fast", s.num_fast},
          {"noise_std", s.noise_std},
          {"slow_amplitude", s.slow_amplitude},
          {"fast_amplitude", s.fast_amplitude},
          {"train_samples", s.train_samples},
          {"eval_samples", s.eval_samples},
          {"seed", s.seed}};
}

SynthSpec synth_from_json(const json& j, const std::string& where, SynthSpec s) {
  check_keys(j, where, {"shape", "num_slow", "num_fast", "noise_std", "slow_amplitude", "fast_amplitude",
                        "train_samples", "eval_samples", "seed"});
  if (j.contains("shape")) s.shape = clip_from_json(j.at("shape"), where + ".shape", s.shape);
  read(j, "num_slow", s.num_slow, where);
  read(j, "num_fast", s.num_fast, where);
  read(j, "noise_std", s.noise_std, where);
  read(j, "slow_amplitude", s.slow_amplitude, where);
  read(j, "fast_amplitude", s.fast_amplitude, where);
  read(j, "train_samples", s.train_samples, where);
  read(j, "eval_samples", s.eval_samples, where);
  read(j, "seed", s.seed, where);
  return s;
}

}  // namespace detail

std::string synth_spec_to_json(const SynthSpec& spec, int indent) { return detail::synth_to_json(spec).dump(indent); }

SynthSpec synth_spec_from_json(std::string_view text) {
  detail::json j;
  try {
    j = text.find_first_not_of(" \t\r\n") == std::string_view::npos ? detail::json::object()
                                                                      : detail::json::parse(text);
  } catch (const detail::json::exception& e) {
    throw ConfigError(std::string("malformed synth spec: ") + e.what());
  }
  return detail::synth_from_json(j, "synth", SynthSpec{});
}

namespace {

void write_f32(const std::string& path, const std::vector<double>& values) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  for (double v : values) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  if (!os) throw Error("failed writing '" + path + "'");
}

std::vector<double> read_f32(const std::string& path, std::size_t count) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open '" + path + "'");
  std::vector<double> out(count);
  for (auto& v : out) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw LoadError(path + ": truncated clip file");
    const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    v = static_cast<double>(std::bit_cast<float>(bits));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw LoadError(path + ": trailing bytes in clip file");
  return out;
}

}  // namespace

void save_dataset(const SynthDataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  detail::json manifest;
  manifest["format"] = "mtv-synth";
  manifest["version"] = 1;
  manifest["spec"] = detail::synth_to_json(data.spec);
  manifest["seed"] = data.spec.seed;
  manifest["clip"] = detail::clip_to_json(data.train.shape);
  for (const auto& [name, split] : {std::pair{"train", &data.train}, std::pair{"eval", &data.eval}}) {
    const std::string file = std::string(name) + ".f32";
    write_f32((std::filesystem::path(dir) / file).string(), split->clips);
    manifest["splits"][name] = {{"count", split->size()}, {"file", file}, {"labels", split->labels}};
  }
  const auto path = std::filesystem::path(dir) / "manifest.json";
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw Error("cannot write '" + tmp + "'");
    os << manifest.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

SynthDataset load_dataset(const std::string& dir) {
  const auto path = std::filesystem::path(dir) / "manifest.json";
  std::ifstream is(path);
  if (!is) throw LoadError("no dataset manifest at '" + path.string() + "'");
  detail::json m;
  try {
    m = detail::json::parse(is);
  } catch (const detail::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  if (m.value("format", "") != "mtv-synth") throw LoadError(path.string() + ": not a synthetic dataset manifest");
  SynthDataset out;
  try {
    out.spec = detail::synth_from_json(m.at("spec"), "spec", SynthSpec{});
    const ClipShape shape = detail::clip_from_json(m.at("clip"), "clip", ClipShape{});
    for (const auto& [name, split] : {std::pair{"train", &out.train}, std::pair{"eval", &out.eval}}) {
      const auto& s = m.at("splits").at(name);
      split->shape = shape;
      split->labels = s.at("labels").get<std::vector<int>>();
      if (split->labels.size() != s.at("count").get<std::size_t>()) throw LoadError(path.string() + ": label count mismatch");
      split->clips = read_f32((std::filesystem::path(dir) / s.at("file").get<std::string>()).string(),
                              split->labels.size() * split->clip_numel());
    }
  } catch (const detail::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace mtv
