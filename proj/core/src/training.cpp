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

#include "mtv/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

#include "mtv/errors.hpp"
#include "mtv/ops.hpp"

namespace mtv {

std::size_t Schedule::total_steps() const {
  return static_cast<std::size_t>(std::llround(total_epochs * static_cast<double>(steps_per_epoch)));
}

double lr_at(const Schedule& s, std::size_t step) {
  const std::size_t total = s.total_steps();
  if (step > total) {
    throw ContractError("step " + std::to_string(step) + " is past the schedule's " + std::to_string(total) + " steps");
  }
  const double warmup = std::max(0.0, s.warmup_epochs) * static_cast<double>(s.steps_per_epoch);
  const double t = static_cast<double>(step);
  if (t < warmup) return s.base_lr * t / warmup;
  if (static_cast<double>(total) <= warmup) return s.base_lr;
  const double progress = (t - warmup) / (static_cast<double>(total) - warmup);
  return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void sgd_momentum_step(std::span<const Tensor> params, OptimizerState& state, double lr, double momentum) {
  if (state.velocity.empty()) {
    for (const auto& p : params) state.velocity.emplace_back(p.numel(), 0.0);
  }
  if (state.velocity.size() != params.size()) throw ContractError("optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    auto& v = state.velocity[i];
    if (v.size() != p.numel()) throw ContractError("momentum buffer does not match parameter shape");
    auto data = p.mutable_data();
    const bool has = p.has_grad();
    std::span<const double> g = has ? p.grad() : std::span<const double>();
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = momentum * v[k] + (has ? g[k] : 0.0);
      data[k] -= lr * v[k];
    }
  }
  ++state.step;
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t n = clip_numel();
  Buffer out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ContractError("sample index out of range");
    std::copy_n(clips.begin() + static_cast<std::ptrdiff_t>(indices[i] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return Tensor::from_data({indices.size(), shape.frames, shape.height, shape.width, shape.channels}, std::move(out));
}

namespace {

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

Tensor predict(const ModelParams& params, const Dataset& data, std::size_t temporal_crops, std::size_t spatial_crops,
               std::size_t batch_size) {
  NoGradGuard guard;
  const std::size_t C = params.config.num_classes;
  Buffer probs;
  probs.reserve(data.size() * C);
  const bool direct = temporal_crops == 1 && spatial_crops == 1 && data.shape == params.config.clip;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor clips = data.batch(idx);
    Tensor p;
    if (direct) {
      p = ops::softmax(forward(params, clips, false), -1);
    } else {
      auto crops = extract_crops(clips, params.config.clip, temporal_crops, spatial_crops);
      p = multi_crop_inference(params, crops);
    }
    probs.insert(probs.end(), p.data().begin(), p.data().end());
  }
  return Tensor::from_data({data.size(), C}, std::move(probs));
}

double evaluate(const ModelParams& params, const Dataset& data, std::size_t temporal_crops, std::size_t spatial_crops,
                std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  Tensor p = predict(params, data, temporal_crops, spatial_crops, batch_size);
  const std::size_t C = p.size(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (static_cast<int>(argmax_row(p.data().subspan(i * C, C))) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(const MTVConfig& config, const Dataset& train_set, const Dataset& eval_set, const TrainHyper& hyper,
                  const MetricsSink& sink) {
  if (hyper.batch_size == 0) throw ConfigError("batch_size must be positive");
  MTVConfig cfg = config;
  for (auto& v : cfg.views) v.encoder.droplayer_rate = hyper.droplayer_rate;
  TrainResult result{build_model(cfg), {}};
  if (hyper.epochs == 0) return result;
  if (train_set.size() == 0) throw ContractError("training set is empty");
  if (!(train_set.shape == cfg.clip)) throw DimensionError("training clips do not match the model's clip shape");

  ModelParams& params = result.params;
  std::vector<Tensor> tensors;
  for (const auto& p : params.named_parameters()) tensors.push_back(p.tensor);

  const std::size_t n = train_set.size();
  Schedule schedule{hyper.base_lr, hyper.warmup_epochs, static_cast<double>(hyper.epochs),
                    (n + hyper.batch_size - 1) / hyper.batch_size};
  OptimizerState state;
  std::mt19937_64 rng(hyper.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  double lr = 0.0;

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += hyper.batch_size) {
      std::span<const std::size_t> idx(order.data() + start, std::min(hyper.batch_size, n - start));
      Tensor clips = train_set.batch(idx);
      std::vector<int> labels;
      for (auto i : idx) labels.push_back(train_set.labels[i]);

      for (auto& t : tensors) t.zero_grad();
      {
        TapeScope scope;
        Tensor logits = forward(params, clips, true, &rng);
        Tensor loss = ops::cross_entropy(logits, labels, hyper.label_smoothing);
        if (!std::isfinite(loss.item())) {
          throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step));
        }
        backward(loss);
        loss_sum += loss.item() * static_cast<double>(idx.size());
        const std::size_t C = logits.size(1);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          if (static_cast<int>(argmax_row(logits.data().subspan(i * C, C))) == labels[i]) ++correct;
        }
      }
      lr = lr_at(schedule, step);
      sgd_momentum_step(tensors, state, lr, hyper.momentum);
      ++step;
    }
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.step = step;
    m.lr = lr;
    m.train_loss = loss_sum / static_cast<double>(n);
    m.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    m.eval_acc = evaluate(params, eval_set, hyper.eval_temporal_crops, hyper.eval_spatial_crops);
    result.history.push_back(m);
    if (sink) sink(m);
  }
  for (auto& t : tensors) t.zero_grad();
  return result;
}

std::string metrics_csv_header() { return "epoch,step,lr,train_loss,train_acc,eval_acc"; }

std::string metrics_csv_row(const EpochMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g,%.6f,%.6f", m.epoch, m.step, m.lr, m.train_loss, m.train_acc,
                m.eval_acc);
  return buf;
}

}  // namespace mtv
