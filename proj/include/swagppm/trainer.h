// Copyright 2026 The SWAG-PPM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Optimization loops: adaptive fine-tuning, constant-rate SGD for SWAG
// exploration, and DP-SGD with per-example clipping and Gaussian noise.

#ifndef SWAGPPM_TRAINER_H_
#define SWAGPPM_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "swagppm/model.h"

namespace swagppm {

enum class OptimizerKind { kAdaptive, kSgdConstant, kDpSgd };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kSgdConstant;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  int epochs = 1;
  // DP-SGD only.
  std::optional<double> clip_norm;
  std::optional<double> noise_multiplier;
  std::uint64_t seed = 0;
  // L2 prior precision. Added to the gradient for SGD variants and applied
  // decoupled for the adaptive optimizer.
  double weight_decay = 0.0;
  // Adaptive optimizer moments.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  // Throws InvalidArgument.
  void validate(std::size_t dataset_size) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochSnapshot {
  int epoch = 0;  // 1-based
  ParameterVector theta;
  double mean_train_loss = 0.0;
};

struct TrainResult {
  ParameterVector theta;
  std::vector<EpochSnapshot> snapshots;
};

// Per-record likelihood exponents keyed by record id.
using RecordWeights = std::unordered_map<std::int64_t, double>;

// Invoked with each snapshot as it is emitted.
using SnapshotObserver = std::function<void(const EpochSnapshot&)>;

// Deterministic given config.seed. With `weights`, every record's likelihood
// is raised to its weight; missing ids throw InvalidArgument. Throws
// TrainingError on a non-finite batch loss.
TrainResult train(const ModelSpec& spec, const ParameterVector& theta0,
                  std::span<const Record> data,
                  const RecordWeights* weights, const TrainConfig& config,
                  const SnapshotObserver& observer = {});

// One DP-SGD update. Each per-example gradient g_i is scaled by
// min(1, C / ||g_i||); the update is
//   lr * ((sum_i clipped g_i + N(0, sigma^2 C^2 I)) / normalizer + wd * theta)
// with normalizer = |minibatch| unless given. sigma = 0 adds no noise and
// C = +inf disables clipping. Throws InvalidArgument on an empty minibatch,
// C <= 0 or sigma < 0.
ParameterVector dp_sgd_step(const ModelSpec& spec, const ParameterVector& theta,
                            std::span<const Record> minibatch, double clip_norm,
                            double noise_multiplier, double learning_rate,
                            std::uint64_t noise_seed,
                            std::optional<double> normalizer = std::nullopt);

// min(1, C / ||g||) applied in place. Returns the factor used.
double clip_gradient(SparseGradient& g, double clip_norm);

enum class BatchMode { kShufflePartition, kPoisson };

// shuffle-partition: one epoch, every index exactly once, last batch short.
// poisson: `num_batches` batches, each index included independently with
// probability q. Batches hold positions into the data.
std::vector<std::vector<std::size_t>> sample_minibatches(
    std::size_t dataset_size, std::size_t batch_size, BatchMode mode,
    std::uint64_t seed, double q = 1.0, std::size_t num_batches = 1);

// Poisson steps per DP-SGD epoch: ceil(n / batch_size).
std::size_t dp_steps_per_epoch(std::size_t dataset_size, std::size_t batch_size);

}  // namespace swagppm

#endif  // SWAGPPM_TRAINER_H_
