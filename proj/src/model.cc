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

#include "swagppm/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "swagppm/blob_io.h"
#include "swagppm/errors.h"
#include "swagppm/rng.h"

namespace swagppm {

std::size_t TensorDescriptor::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

ParameterLayout::ParameterLayout(
    std::vector<std::pair<std::string, std::vector<std::size_t>>> tensors) {
  std::set<std::string> seen;
  for (auto& [name, shape] : tensors) {
    if (!seen.insert(name).second) {
      throw InvalidArgument("duplicate tensor name '" + name + "'");
    }
    TensorDescriptor t{std::move(name), std::move(shape), total_};
    total_ += t.size();
    tensors_.push_back(std::move(t));
  }
}

const TensorDescriptor& ParameterLayout::at(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw InvalidArgument("no tensor named '" + name + "'");
}

nlohmann::json ParameterLayout::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& t : tensors_) {
    arr.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
  }
  return arr;
}

ParameterLayout ParameterLayout::from_json(const nlohmann::json& j) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> tensors;
  for (const auto& t : j) {
    tensors.emplace_back(t.at("name").get<std::string>(),
                         t.at("shape").get<std::vector<std::size_t>>());
  }
  ParameterLayout layout(std::move(tensors));
  // Stored offsets must agree with the dense packing.
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].at("offset").get<std::size_t>() != layout.tensors_[i].offset) {
      throw FormatError("layout offsets do not partition the parameter range");
    }
  }
  return layout;
}

ParameterVector::ParameterVector(ParameterLayout layout)
    : layout_(std::move(layout)), values_(layout_.total_size(), 0.0) {}

ParameterVector::ParameterVector(ParameterLayout layout,
                                 std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.total_size()) {
    const std::string name =
        layout_.tensors().empty() ? "<empty>" : layout_.tensors().back().name;
    throw DimensionMismatch(name, "layout needs " +
                                      std::to_string(layout_.total_size()) +
                                      " values, got " +
                                      std::to_string(values_.size()));
  }
  if (!all_finite()) throw InvalidArgument("parameter vector has non-finite entries");
}

std::span<const double> ParameterVector::tensor(const std::string& name) const {
  const auto& t = layout_.at(name);
  return std::span<const double>(values_).subspan(t.offset, t.size());
}

ParameterVector& ParameterVector::operator+=(const ParameterVector& other) {
  if (!(layout_ == other.layout_)) {
    throw DimensionMismatch("<layout>", "cannot add vectors with different layouts");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ParameterVector& ParameterVector::operator*=(double scale) {
  for (double& v : values_) v *= scale;
  return *this;
}

bool ParameterVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void SparseVector::validate() const {
  if (indices.size() != values.size()) {
    throw InvalidArgument("sparse vector index/value length mismatch");
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i > 0 && indices[i] <= indices[i - 1]) {
      throw InvalidArgument("sparse vector indices must be strictly increasing");
    }
    if (!std::isfinite(values[i])) {
      throw InvalidArgument("sparse vector has a non-finite value");
    }
  }
}

std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::kSoftmaxLinear:
      return "softmax-linear";
    case ModelFamily::kMlpOneHidden:
      return "mlp-1-hidden";
  }
  return "unknown";
}

ModelFamily model_family_from_string(const std::string& name) {
  if (name == "softmax-linear") return ModelFamily::kSoftmaxLinear;
  if (name == "mlp-1-hidden") return ModelFamily::kMlpOneHidden;
  throw InvalidArgument("unknown model family '" + name + "'");
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw InvalidArgument("input-dim must be positive");
  if (num_classes < 2) throw InvalidArgument("num-classes must be >= 2");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight-decay must be >= 0");
  if (family == ModelFamily::kSoftmaxLinear && hidden_dim != 0) {
    throw InvalidArgument("softmax-linear requires hidden-dim 0");
  }
  if (family == ModelFamily::kMlpOneHidden && hidden_dim == 0) {
    throw InvalidArgument("mlp-1-hidden requires hidden-dim > 0");
  }
}

ParameterLayout ModelSpec::layout() const {
  validate();
  const auto c = static_cast<std::size_t>(num_classes);
  if (family == ModelFamily::kSoftmaxLinear) {
    return ParameterLayout({{"weight", {input_dim, c}}, {"bias", {c}}});
  }
  return ParameterLayout({{"hidden.weight", {input_dim, hidden_dim}},
                          {"hidden.bias", {hidden_dim}},
                          {"output.weight", {hidden_dim, c}},
                          {"output.bias", {c}}});
}

nlohmann::json ModelSpec::to_json() const {
  return {{"family", to_string(family)},
          {"input_dim", input_dim},
          {"hidden_dim", hidden_dim},
          {"num_classes", num_classes},
          {"weight_decay", weight_decay}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.family = model_family_from_string(j.at("family").get<std::string>());
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  spec.hidden_dim = j.value("hidden_dim", std::size_t{0});
  spec.num_classes = j.at("num_classes").get<int>();
  spec.weight_decay = j.value("weight_decay", 0.0);
  spec.validate();
  return spec;
}

double SparseGradient::squared_norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s;
}

double SparseGradient::norm() const { return std::sqrt(squared_norm()); }

namespace {

bool shapes_match(const ModelSpec& spec, const ParameterLayout& layout) {
  const auto c = static_cast<std::size_t>(spec.num_classes);
  const auto& t = layout.tensors();
  using Shape = std::vector<std::size_t>;
  if (spec.family == ModelFamily::kSoftmaxLinear) {
    return t.size() == 2 && t[0].shape == Shape{spec.input_dim, c} &&
           t[1].shape == Shape{c};
  }
  const std::size_t h = spec.hidden_dim;
  return t.size() == 4 && t[0].shape == Shape{spec.input_dim, h} &&
         t[1].shape == Shape{h} && t[2].shape == Shape{h, c} &&
         t[3].shape == Shape{c};
}

void check_shapes(const ModelSpec& spec, const ParameterVector& theta,
                  const SparseVector& features) {
  if (!shapes_match(spec, theta.layout())) {
    const ParameterLayout expected = spec.layout();
    // Name the first tensor that disagrees.
    const auto& have = theta.layout().tensors();
    for (std::size_t i = 0; i < expected.tensors().size(); ++i) {
      if (i >= have.size() || !(have[i] == expected.tensors()[i])) {
        throw DimensionMismatch(expected.tensors()[i].name,
                                "parameter layout does not match model spec");
      }
    }
    throw DimensionMismatch(have[expected.tensors().size()].name,
                            "unexpected extra tensor");
  }
  if (features.indices.size() != features.values.size()) {
    throw InvalidArgument("sparse vector index/value length mismatch");
  }
  if (!features.indices.empty() && features.indices.back() >= spec.input_dim) {
    throw DimensionMismatch(
        theta.layout().tensors().front().name,
        "feature index " + std::to_string(features.indices.back()) +
            " >= input-dim " + std::to_string(spec.input_dim));
  }
}

// Hidden activations (MLP only) and logits.
struct Activations {
  std::vector<double> hidden;
  std::vector<double> logits;
};

Activations compute_logits(const ModelSpec& spec, const ParameterVector& theta,
                           const SparseVector& x) {
  const auto c = static_cast<std::size_t>(spec.num_classes);
  const auto v = theta.values();
  Activations a;
  if (spec.family == ModelFamily::kSoftmaxLinear) {
    const auto& w = theta.layout().tensors()[0];
    const auto& b = theta.layout().tensors()[1];
    a.logits.assign(v.begin() + b.offset, v.begin() + b.offset + c);
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      const double* row = v.data() + w.offset + x.indices[k] * c;
      for (std::size_t j = 0; j < c; ++j) a.logits[j] += x.values[k] * row[j];
    }
    return a;
  }
  const std::size_t h = spec.hidden_dim;
  const auto& w1 = theta.layout().tensors()[0];
  const auto& b1 = theta.layout().tensors()[1];
  const auto& w2 = theta.layout().tensors()[2];
  const auto& b2 = theta.layout().tensors()[3];
  a.hidden.assign(v.begin() + b1.offset, v.begin() + b1.offset + h);
  for (std::size_t k = 0; k < x.nnz(); ++k) {
    const double* row = v.data() + w1.offset + x.indices[k] * h;
    for (std::size_t j = 0; j < h; ++j) a.hidden[j] += x.values[k] * row[j];
  }
  for (double& z : a.hidden) z = std::tanh(z);
  a.logits.assign(v.begin() + b2.offset, v.begin() + b2.offset + c);
  for (std::size_t i = 0; i < h; ++i) {
    const double* row = v.data() + w2.offset + i * c;
    for (std::size_t j = 0; j < c; ++j) a.logits[j] += a.hidden[i] * row[j];
  }
  return a;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  const double lse = m + std::log(sum);
  std::vector<double> p(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) p[j] = std::exp(logits[j] - lse);
  return p;
}

void check_label(const ModelSpec& spec, const Record& record) {
  if (record.label < 0 || record.label >= spec.num_classes) {
    throw InvalidArgument("record " + std::to_string(record.id) + " has label " +
                          std::to_string(record.label) + " outside [0, " +
                          std::to_string(spec.num_classes) + ")");
  }
}

}  // namespace

std::vector<double> forward(const ModelSpec& spec, const ParameterVector& theta,
                            const SparseVector& features) {
  check_shapes(spec, theta, features);
  return softmax(compute_logits(spec, theta, features).logits);
}

double log_likelihood(const ModelSpec& spec, const ParameterVector& theta,
                      const Record& record) {
  check_label(spec, record);
  const auto p = forward(spec, theta, record.features);
  return std::log(std::max(p[record.label], kProbabilityFloor));
}

int predict(const ModelSpec& spec, const ParameterVector& theta,
            const SparseVector& features) {
  check_shapes(spec, theta, features);
  const auto logits = compute_logits(spec, theta, features).logits;
  // max_element returns the first maximum.
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                          logits.begin());
}

SparseGradient record_nll_gradient(const ModelSpec& spec,
                                   const ParameterVector& theta,
                                   const Record& record, double* nll) {
  check_label(spec, record);
  check_shapes(spec, theta, record.features);
  const auto& x = record.features;
  const auto c = static_cast<std::size_t>(spec.num_classes);
  Activations a = compute_logits(spec, theta, x);
  std::vector<double> dlogits = softmax(a.logits);
  if (nll != nullptr) {
    *nll = -std::log(std::max(dlogits[record.label], kProbabilityFloor));
  }
  dlogits[record.label] -= 1.0;

  SparseGradient g;
  const auto& tensors = theta.layout().tensors();
  if (spec.family == ModelFamily::kSoftmaxLinear) {
    const auto& w = tensors[0];
    const auto& b = tensors[1];
    g.indices.reserve(x.nnz() * c + c);
    g.values.reserve(x.nnz() * c + c);
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      for (std::size_t j = 0; j < c; ++j) {
        g.indices.push_back(w.offset + x.indices[k] * c + j);
        g.values.push_back(x.values[k] * dlogits[j]);
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      g.indices.push_back(b.offset + j);
      g.values.push_back(dlogits[j]);
    }
    return g;
  }

  const std::size_t h = spec.hidden_dim;
  const auto& w1 = tensors[0];
  const auto& b1 = tensors[1];
  const auto& w2 = tensors[2];
  const auto& b2 = tensors[3];
  const auto v = theta.values();
  // Back through the output layer and the tanh.
  std::vector<double> dpre(h, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    const double* row = v.data() + w2.offset + i * c;
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += row[j] * dlogits[j];
    dpre[i] = s * (1.0 - a.hidden[i] * a.hidden[i]);
  }
  const std::size_t n = x.nnz() * h + h + h * c + c;
  g.indices.reserve(n);
  g.values.reserve(n);
  for (std::size_t k = 0; k < x.nnz(); ++k) {
    for (std::size_t i = 0; i < h; ++i) {
      g.indices.push_back(w1.offset + x.indices[k] * h + i);
      g.values.push_back(x.values[k] * dpre[i]);
    }
  }
  for (std::size_t i = 0; i < h; ++i) {
    g.indices.push_back(b1.offset + i);
    g.values.push_back(dpre[i]);
  }
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      g.indices.push_back(w2.offset + i * c + j);
      g.values.push_back(a.hidden[i] * dlogits[j]);
    }
  }
  for (std::size_t j = 0; j < c; ++j) {
    g.indices.push_back(b2.offset + j);
    g.values.push_back(dlogits[j]);
  }
  return g;
}

ParameterVector weighted_nll_gradient(const ModelSpec& spec,
                                      const ParameterVector& theta,
                                      std::span<const WeightedRecord> batch) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  for (const auto& wr : batch) {
    if (!(wr.weight >= 0.0 && wr.weight <= 1.0)) {
      throw InvalidArgument("record weight " + format_double(wr.weight) +
                            " outside [0, 1]");
    }
  }
  std::vector<double> sum(theta.size(), 0.0);
  for (const auto& wr : batch) {
    const SparseGradient g = record_nll_gradient(spec, theta, *wr.record);
    for (std::size_t k = 0; k < g.indices.size(); ++k) {
      sum[g.indices[k]] += wr.weight * g.values[k];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const auto v = theta.values();
  for (std::size_t i = 0; i < sum.size(); ++i) {
    sum[i] = sum[i] * inv_n + spec.weight_decay * v[i];
  }
  return ParameterVector(theta.layout(), std::move(sum));
}

double weighted_nll(const ModelSpec& spec, const ParameterVector& theta,
                    std::span<const WeightedRecord> batch) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  double s = 0.0;
  for (const auto& wr : batch) {
    s -= wr.weight * log_likelihood(spec, theta, *wr.record);
  }
  double sq = 0.0;
  for (double v : theta.values()) sq += v * v;
  return s / static_cast<double>(batch.size()) + 0.5 * spec.weight_decay * sq;
}

ParameterVector initialize_parameters(const ModelSpec& spec, std::uint64_t seed) {
  ParameterVector theta(spec.layout());
  if (spec.family == ModelFamily::kSoftmaxLinear) return theta;
  Rng rng(derive_seed(seed, "init"));
  auto& v = theta.mutable_values();
  const auto& w1 = theta.layout().at("hidden.weight");
  const auto& w2 = theta.layout().at("output.weight");
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
  std::uniform_real_distribution<double> first(-bound1, bound1);
  for (std::size_t i = 0; i < w1.size(); ++i) v[w1.offset + i] = first(rng);
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden_dim));
  std::uniform_real_distribution<double> second(-bound2, bound2);
  for (std::size_t i = 0; i < w2.size(); ++i) v[w2.offset + i] = second(rng);
  return theta;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header = {{"kind", "checkpoint"},
                           {"spec", ckpt.spec.to_json()},
                           {"layout", ckpt.theta.layout().to_json()},
                           {"metadata", ckpt.metadata}};
  write_blob(path, std::move(header), {ckpt.theta.values()});
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Blob blob = read_blob(path);
  if (blob.header.value("kind", "") != "checkpoint") {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  Checkpoint ckpt;
  ckpt.spec = ModelSpec::from_json(blob.header.at("spec"));
  auto layout = ParameterLayout::from_json(blob.header.at("layout"));
  ckpt.theta = ParameterVector(std::move(layout), std::move(blob.payload));
  ckpt.metadata = blob.header.value("metadata", nlohmann::json::object());
  return ckpt;
}

}  // namespace swagppm
