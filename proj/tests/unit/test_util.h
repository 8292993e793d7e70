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

#ifndef SWAGPPM_TESTS_TEST_UTIL_H_
#define SWAGPPM_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "swagppm/model.h"

namespace swagppm::testing {

inline SparseVector random_sparse(std::mt19937_64& rng, std::size_t dim,
                                  std::size_t max_nnz) {
  std::uniform_int_distribution<std::size_t> count(1, std::min(dim, max_nnz));
  std::uniform_int_distribution<std::uint32_t> index(0, static_cast<std::uint32_t>(dim - 1));
  std::normal_distribution<double> value(0.0, 1.0);
  std::set<std::uint32_t> picked;
  const std::size_t n = count(rng);
  while (picked.size() < n) picked.insert(index(rng));
  SparseVector v;
  for (auto i : picked) {
    v.indices.push_back(i);
    v.values.push_back(value(rng));
  }
  return v;
}

inline ParameterVector random_theta(std::mt19937_64& rng, const ModelSpec& spec,
                                    double scale = 1.0) {
  ParameterVector theta(spec.layout());
  std::normal_distribution<double> value(0.0, scale);
  for (double& v : theta.mutable_values()) v = value(rng);
  return theta;
}

inline std::vector<Record> random_records(std::mt19937_64& rng, const ModelSpec& spec,
                                          std::size_t n) {
  std::uniform_int_distribution<int> label(0, spec.num_classes - 1);
  std::vector<Record> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({static_cast<std::int64_t>(i),
                   random_sparse(rng, spec.input_dim, spec.input_dim), label(rng)});
  }
  return out;
}

inline ModelSpec small_linear(std::size_t dim = 4, int classes = 3) {
  ModelSpec s;
  s.family = ModelFamily::kSoftmaxLinear;
  s.input_dim = dim;
  s.num_classes = classes;
  return s;
}

inline ModelSpec small_mlp(std::size_t dim = 3, std::size_t hidden = 4, int classes = 3) {
  ModelSpec s;
  s.family = ModelFamily::kMlpOneHidden;
  s.input_dim = dim;
  s.hidden_dim = hidden;
  s.num_classes = classes;
  return s;
}

// Central finite differences of `f` at theta.
template <typename F>
std::vector<double> finite_difference_gradient(const ParameterVector& theta, F f,
                                               double h = 1e-5) {
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    ParameterVector plus = theta;
    ParameterVector minus = theta;
    plus.mutable_values()[i] += h;
    minus.mutable_values()[i] -= h;
    grad[i] = (f(plus) - f(minus)) / (2.0 * h);
  }
  return grad;
}

// Componentwise |a - b| / max(|a|, |b|, floor).
inline double max_relative_error(std::span<const double> a, std::span<const double> b,
                                 double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace swagppm::testing

#endif  // SWAGPPM_TESTS_TEST_UTIL_H_
