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

#include "swagppm/trainer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "swagppm/errors.h"
#include "swagppm/rng.h"

namespace swagppm {
namespace {

struct BatchGradient {
  std::vector<double> sum;  // sum_i w_i * grad(-ell_i), data term only
  double weighted_nll = 0.0;
};

// Fixed-order accumulation shared by every optimizer so that equivalent
// configurations produce bit-identical updates.
BatchGradient accumulate(const ModelSpec& spec, const ParameterVector& theta,
                         std::span<const Record> data,
                         std::span<const std::size_t> batch,
                         std::span<const double> weights) {
  BatchGradient out;
  out.sum.assign(theta.size(), 0.0);
  for (std::size_t pos : batch) {
    double nll = 0.0;
    const SparseGradient g = record_nll_gradient(spec, theta, data[pos], &nll);
    const double w = weights.empty() ? 1.0 : weights[pos];
    for (std::size_t k = 0; k < g.indices.size(); ++k) {
      out.sum[g.indices[k]] += w * g.values[k];
    }
    out.weighted_nll += w * nll;
  }
  return out;
}

double half_sq_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return 0.5 * s;
}

// theta <- theta - lr * (sum / normalizer + wd * theta)
void sgd_update(std::vector<double>& theta, std::span<const double> sum,
                double normalizer, double weight_decay, double lr) {
  const double inv = 1.0 / normalizer;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double grad = sum[i] * inv + weight_decay * theta[i];
    theta[i] -= lr * grad;
  }
}

// Clipped per-example sum plus Gaussian noise; an empty batch yields noise only.
std::vector<double> dp_noisy_sum(const ModelSpec& spec,
                                 const ParameterVector& theta,
                                 std::span<const Record> data,
                                 std::span<const std::size_t> batch,
                                 double clip_norm, double sigma,
                                 std::uint64_t noise_seed) {
  std::vector<double> sum(theta.size(), 0.0);
  for (std::size_t pos : batch) {
    SparseGradient g = record_nll_gradient(spec, theta, data[pos]);
    clip_gradient(g, clip_norm);
    for (std::size_t k = 0; k < g.indices.size(); ++k) {
      sum[g.indices[k]] += g.values[k];
    }
  }
  if (sigma > 0.0) {
    Rng rng(noise_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = sigma * clip_norm;
    for (double& s : sum) s += scale * normal(rng);
  }
  return sum;
}

void check_dp_args(double clip_norm, double sigma) {
  if (!(clip_norm > 0.0)) throw InvalidArgument("clip norm must be > 0");
  if (!(sigma >= 0.0) || std::isinf(sigma)) {
    throw InvalidArgument("noise multiplier must be finite and >= 0");
  }
  if (std::isinf(clip_norm) && sigma > 0.0) {
    throw InvalidArgument("infinite clip norm requires zero noise");
  }
}

}  // namespace

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kAdaptive:
      return "adaptive";
    case OptimizerKind::kSgdConstant:
      return "sgd-constant";
    case OptimizerKind::kDpSgd:
      return "dp-sgd";
  }
  return "unknown";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "adaptive") return OptimizerKind::kAdaptive;
  if (name == "sgd-constant") return OptimizerKind::kSgdConstant;
  if (name == "dp-sgd") return OptimizerKind::kDpSgd;
  throw InvalidArgument("unknown optimizer '" + name + "'");
}

void TrainConfig::validate(std::size_t dataset_size) const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (epochs > 0 && batch_size > dataset_size) {
    throw InvalidArgument("batch size " + std::to_string(batch_size) +
                          " exceeds dataset size " + std::to_string(dataset_size));
  }
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight decay must be >= 0");
  if (optimizer == OptimizerKind::kDpSgd) {
    if (!clip_norm || !noise_multiplier) {
      throw InvalidArgument("dp-sgd requires clip norm and noise multiplier");
    }
    check_dp_args(*clip_norm, *noise_multiplier);
  }
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"optimizer", to_string(optimizer)},
                      {"learning_rate", learning_rate},
                      {"batch_size", batch_size},
                      {"epochs", epochs},
                      {"seed", seed},
                      {"weight_decay", weight_decay},
                      {"beta1", beta1},
                      {"beta2", beta2},
                      {"adam_epsilon", adam_epsilon}};
  if (clip_norm) j["clip_norm"] = *clip_norm;
  if (noise_multiplier) j["noise_multiplier"] = *noise_multiplier;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  if (j.contains("clip_norm")) c.clip_norm = j["clip_norm"].get<double>();
  if (j.contains("noise_multiplier")) {
    c.noise_multiplier = j["noise_multiplier"].get<double>();
  }
  return c;
}

double clip_gradient(SparseGradient& g, double clip_norm) {
  const double norm = g.norm();
  if (!(norm > clip_norm)) return 1.0;
  const double factor = clip_norm / norm;
  for (double& v : g.values) v *= factor;
  return factor;
}

ParameterVector dp_sgd_step(const ModelSpec& spec, const ParameterVector& theta,
                            std::span<const Record> minibatch, double clip_norm,
                            double noise_multiplier, double learning_rate,
                            std::uint64_t noise_seed,
                            std::optional<double> normalizer) {
  if (minibatch.empty()) throw InvalidArgument("empty minibatch");
  check_dp_args(clip_norm, noise_multiplier);
  std::vector<std::size_t> positions(minibatch.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  const auto sum = dp_noisy_sum(spec, theta, minibatch, positions, clip_norm,
                                noise_multiplier, noise_seed);
  ParameterVector next = theta;
  sgd_update(next.mutable_values(), sum,
             normalizer.value_or(static_cast<double>(minibatch.size())),
             spec.weight_decay, learning_rate);
  return next;
}

std::vector<std::vector<std::size_t>> sample_minibatches(
    std::size_t dataset_size, std::size_t batch_size, BatchMode mode,
    std::uint64_t seed, double q, std::size_t num_batches) {
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> batches;
  if (mode == BatchMode::kShufflePartition) {
    if (batch_size == 0) throw InvalidArgument("batch size must be positive");
    std::vector<std::size_t> order(dataset_size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < dataset_size; start += batch_size) {
      const std::size_t end = std::min(dataset_size, start + batch_size);
      batches.emplace_back(order.begin() + static_cast<long>(start),
                           order.begin() + static_cast<long>(end));
    }
    return batches;
  }
  if (!(q > 0.0 && q <= 1.0)) throw InvalidArgument("poisson rate must lie in (0, 1]");
  std::bernoulli_distribution include(q);
  for (std::size_t b = 0; b < num_batches; ++b) {
    std::vector<std::size_t> batch;
    for (std::size_t i = 0; i < dataset_size; ++i) {
      if (include(rng)) batch.push_back(i);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::size_t dp_steps_per_epoch(std::size_t dataset_size, std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  return (dataset_size + batch_size - 1) / batch_size;
}

TrainResult train(const ModelSpec& spec, const ParameterVector& theta0,
                  std::span<const Record> data, const RecordWeights* weights,
                  const TrainConfig& config, const SnapshotObserver& observer) {
  config.validate(data.size());
  TrainResult result{theta0, {}};
  if (config.epochs == 0) return result;

  std::vector<double> w;
  if (weights != nullptr) {
    w.reserve(data.size());
    for (const auto& r : data) {
      const auto it = weights->find(r.id);
      if (it == weights->end()) {
        throw InvalidArgument("no weight for record " + std::to_string(r.id));
      }
      if (!(it->second >= 0.0 && it->second <= 1.0)) {
        throw InvalidArgument("weight for record " + std::to_string(r.id) +
                              " outside [0, 1]");
      }
      w.push_back(it->second);
    }
  }

  ModelSpec decayed = spec;
  decayed.weight_decay = config.weight_decay;
  auto& theta = result.theta.mutable_values();
  std::vector<double> m;
  std::vector<double> v;
  if (config.optimizer == OptimizerKind::kAdaptive) {
    m.assign(theta.size(), 0.0);
    v.assign(theta.size(), 0.0);
  }
  const auto nominal = static_cast<double>(config.batch_size);
  const std::uint64_t noise_root = derive_seed(config.seed, "dp-noise");
  long step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::uint64_t batch_seed =
        derive_seed(derive_seed(config.seed, "batches"), static_cast<uint64_t>(epoch));
    std::vector<std::vector<std::size_t>> batches;
    if (config.optimizer == OptimizerKind::kDpSgd) {
      const double q = nominal / static_cast<double>(data.size());
      batches = sample_minibatches(data.size(), config.batch_size, BatchMode::kPoisson,
                                   batch_seed, q,
                                   dp_steps_per_epoch(data.size(), config.batch_size));
    } else {
      batches = sample_minibatches(data.size(), config.batch_size,
                                   BatchMode::kShufflePartition, batch_seed);
    }

    double loss_sum = 0.0;
    std::size_t loss_batches = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      ++step;
      const auto& batch = batches[b];
      if (config.optimizer == OptimizerKind::kDpSgd) {
        const ParameterVector& current = result.theta;
        if (!batch.empty()) {
          // Diagnostic only; not part of the private update.
          double nll = 0.0;
          for (std::size_t pos : batch) nll -= log_likelihood(spec, current, data[pos]);
          const double loss = nll / static_cast<double>(batch.size()) +
                              config.weight_decay * half_sq_norm(theta);
          if (!std::isfinite(loss)) throw TrainingError(epoch, static_cast<int>(b), loss);
          loss_sum += loss;
          ++loss_batches;
        }
        const auto sum = dp_noisy_sum(decayed, current, data, batch,
                                      *config.clip_norm, *config.noise_multiplier,
                                      derive_seed(noise_root, static_cast<uint64_t>(step)));
        sgd_update(theta, sum, nominal, config.weight_decay, config.learning_rate);
        continue;
      }

      BatchGradient g = accumulate(decayed, result.theta, data, batch, w);
      const double bsize = static_cast<double>(batch.size());
      const double loss =
          g.weighted_nll / bsize + config.weight_decay * half_sq_norm(theta);
      if (!std::isfinite(loss)) throw TrainingError(epoch, static_cast<int>(b), loss);
      loss_sum += loss;
      ++loss_batches;

      if (config.optimizer == OptimizerKind::kSgdConstant) {
        sgd_update(theta, g.sum, bsize, config.weight_decay, config.learning_rate);
        continue;
      }
      // Adaptive moments with decoupled weight decay.
      const double inv = 1.0 / bsize;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double grad = g.sum[i] * inv;
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad;
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad * grad;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        theta[i] -= config.learning_rate *
                    (mhat / (std::sqrt(vhat) + config.adam_epsilon) +
                     config.weight_decay * theta[i]);
      }
    }

    if (!result.theta.all_finite()) {
      throw TrainingError(epoch, static_cast<int>(batches.size()),
                          std::numeric_limits<double>::quiet_NaN());
    }
    EpochSnapshot snap{epoch, result.theta,
                       loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0};
    if (observer) observer(snap);
    result.snapshots.push_back(std::move(snap));
  }
  return result;
}

}  // namespace swagppm
