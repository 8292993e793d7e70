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

// Differentiable multiclass classifiers over sparse inputs.
//
// Two families are supported:
//   softmax-linear:  logits = W^T x + b
//   mlp-1-hidden:    logits = W2^T tanh(W1^T x + b1) + b2
//
// All parameters live in one flat ParameterVector. Weight matrices are stored
// row-major with the input dimension first, so a single nonzero input feature
// touches one contiguous row.

#ifndef SWAGPPM_MODEL_H_
#define SWAGPPM_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace swagppm {

struct TensorDescriptor {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;

  std::size_t size() const;
  bool operator==(const TensorDescriptor&) const = default;
};

// Ordered tensor descriptors whose ranges partition [0, total_size()).
class ParameterLayout {
 public:
  ParameterLayout() = default;
  // Offsets are assigned in order. Throws InvalidArgument on duplicate names.
  explicit ParameterLayout(
      std::vector<std::pair<std::string, std::vector<std::size_t>>> tensors);

  const std::vector<TensorDescriptor>& tensors() const { return tensors_; }
  std::size_t total_size() const { return total_; }
  const TensorDescriptor& at(const std::string& name) const;

  bool operator==(const ParameterLayout&) const = default;

  nlohmann::json to_json() const;
  static ParameterLayout from_json(const nlohmann::json& j);

 private:
  std::vector<TensorDescriptor> tensors_;
  std::size_t total_ = 0;
};

// Flat vector of model parameters plus the layout describing it.
class ParameterVector {
 public:
  ParameterVector() = default;
  // Zero-filled.
  explicit ParameterVector(ParameterLayout layout);
  // Throws DimensionMismatch if sizes disagree, InvalidArgument on non-finite
  // entries.
  ParameterVector(ParameterLayout layout, std::vector<double> values);

  const ParameterLayout& layout() const { return layout_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  // Copy-and-update is the only mutation path; callers own the copy.
  std::vector<double>& mutable_values() { return values_; }

  std::span<const double> tensor(const std::string& name) const;

  // Element-wise composition; both throw DimensionMismatch on layout mismatch.
  ParameterVector& operator+=(const ParameterVector& other);
  ParameterVector& operator*=(double scale);
  friend ParameterVector operator+(ParameterVector a, const ParameterVector& b) {
    return a += b;
  }
  friend ParameterVector operator*(double s, ParameterVector a) {
    return a *= s;
  }

  bool all_finite() const;
  bool operator==(const ParameterVector&) const = default;

 private:
  ParameterLayout layout_;
  std::vector<double> values_;
};

// Sparse input vector; indices strictly increasing, values finite.
struct SparseVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::size_t nnz() const { return indices.size(); }
  // Throws InvalidArgument when the invariants are violated.
  void validate() const;
  bool operator==(const SparseVector&) const = default;
};

struct Record {
  std::int64_t id = 0;
  SparseVector features;
  int label = 0;
};

enum class ModelFamily { kSoftmaxLinear, kMlpOneHidden };

std::string to_string(ModelFamily family);
ModelFamily model_family_from_string(const std::string& name);

struct ModelSpec {
  ModelFamily family = ModelFamily::kSoftmaxLinear;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;  // 0 for softmax-linear
  int num_classes = 2;
  // Gaussian prior precision. Enters the training loss, never ell_theta.
  double weight_decay = 0.0;

  void validate() const;
  ParameterLayout layout() const;
  std::size_t parameter_count() const { return layout().total_size(); }

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

// Gradient of -ell_theta(D_i) for one record, as (index, value) pairs.
// Indices are unique.
struct SparseGradient {
  std::vector<std::size_t> indices;
  std::vector<double> values;

  double squared_norm() const;
  double norm() const;
};

// Record paired with its likelihood exponent alpha_i.
struct WeightedRecord {
  const Record* record = nullptr;
  double weight = 1.0;
};

// Lower bound applied to probabilities before taking logs.
inline constexpr double kProbabilityFloor = 1e-300;

// Softmax class probabilities.
std::vector<double> forward(const ModelSpec& spec, const ParameterVector& theta,
                            const SparseVector& features);

// log p(label | features, theta), floored at log(kProbabilityFloor). Always <= 0.
double log_likelihood(const ModelSpec& spec, const ParameterVector& theta,
                      const Record& record);

// Argmax of forward(); ties go to the lowest class index.
int predict(const ModelSpec& spec, const ParameterVector& theta,
            const SparseVector& features);

// Gradient of -ell_theta(record). When `nll` is given it receives
// -log_likelihood(record) from the same forward pass.
SparseGradient record_nll_gradient(const ModelSpec& spec,
                                   const ParameterVector& theta,
                                   const Record& record, double* nll = nullptr);

// grad_theta [ -(1/|batch|) sum_i alpha_i ell_theta(D_i)
//              + (spec.weight_decay / 2) ||theta||^2 ].
// Throws InvalidArgument if any alpha_i is outside [0, 1] or the batch is
// empty.
ParameterVector weighted_nll_gradient(const ModelSpec& spec,
                                      const ParameterVector& theta,
                                      std::span<const WeightedRecord> batch);

// Same loss as above, evaluated (not differentiated).
double weighted_nll(const ModelSpec& spec, const ParameterVector& theta,
                    std::span<const WeightedRecord> batch);

// Seeded initialization: fan-in scaled uniform for MLP weights, zero biases,
// zero softmax-linear weights.
ParameterVector initialize_parameters(const ModelSpec& spec, std::uint64_t seed);

// Checkpoint: JSON header (spec, layout, caller metadata) followed by the raw
// little-endian float64 payload. Round-trips bit-exactly.
struct Checkpoint {
  ModelSpec spec;
  ParameterVector theta;
  nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace swagppm

#endif  // SWAGPPM_MODEL_H_
