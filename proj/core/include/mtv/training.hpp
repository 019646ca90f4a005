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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mtv/config.hpp"
#include "mtv/model.hpp"
#include "mtv/tensor.hpp"

namespace mtv {

struct Schedule {
  double base_lr = 0.1;
  double warmup_epochs = 2.5;
  double total_epochs = 30;
  std::size_t steps_per_epoch = 1;

  std::size_t total_steps() const;
};

/// Linear ramp from 0 over the warmup, then half-cosine decay to 0.
double lr_at(const Schedule& schedule, std::size_t step);

struct OptimizerState {
  std::vector<std::vector<double>> velocity;
  std::size_t step = 0;
};

/// v <- momentum * v + g;  p <- p - lr * v. Parameters without a gradient
/// are treated as having a zero gradient.
void sgd_momentum_step(std::span<const Tensor> params, OptimizerState& state, double lr, double momentum = 0.9);

/// Clips stored as one contiguous [N, T, H, W, C] buffer.
struct Dataset {
  ClipShape shape;
  std::vector<double> clips;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t clip_numel() const { return shape.frames * shape.height * shape.width * shape.channels; }
  /// [n, T, H, W, C] tensor of the samples at `indices`.
  Tensor batch(std::span<const std::size_t> indices) const;
};

struct TrainHyper {
  double base_lr = 0.1;
  double momentum = 0.9;
  double warmup_epochs = 2.5;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double label_smoothing = 0.0;
  double droplayer_rate = 0.1;
  std::size_t eval_temporal_crops = 1;
  std::size_t eval_spatial_crops = 1;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double eval_acc = 0.0;
};

using MetricsSink = std::function<void(const EpochMetrics&)>;

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> history;
};

/// Accuracy of multi-crop predictions over a dataset.
double evaluate(const ModelParams& params, const Dataset& data, std::size_t temporal_crops = 1,
                std::size_t spatial_crops = 1, std::size_t batch_size = 32);

/// Class probabilities [N, C] of every sample.
Tensor predict(const ModelParams& params, const Dataset& data, std::size_t temporal_crops = 1,
               std::size_t spatial_crops = 1, std::size_t batch_size = 32);

/// Trains a fresh model built from `config` (droplayer rate taken from
/// `hyper`). Throws NumericError on a non-finite loss.
TrainResult train(const MTVConfig& config, const Dataset& train_set, const Dataset& eval_set,
                  const TrainHyper& hyper, const MetricsSink& sink = {});

/// CSV header and row of the metrics file.
std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

}  // namespace mtv
