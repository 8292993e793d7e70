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

// Pseudo-posterior mechanism: per-record risks from posterior draws, the
// linear risk-to-weight map, weighted local sensitivity, the epsilon bound,
// and risk-equalizing reweighting.

#ifndef SWAGPPM_PPM_H_
#define SWAGPPM_PPM_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "swagppm/model.h"
#include "swagppm/swag.h"
#include "swagppm/trainer.h"

namespace swagppm {

// |ell_{theta_s}(D_i)| for S draws (rows) and n records (columns).
class LogLikelihoodMatrix {
 public:
  LogLikelihoodMatrix() = default;
  LogLikelihoodMatrix(std::size_t draws, std::vector<std::int64_t> record_ids);
  // Row-major values; throws InvalidArgument on size mismatch or negative or
  // non-finite entries.
  LogLikelihoodMatrix(std::size_t draws, std::vector<std::int64_t> record_ids,
                      std::vector<double> values);

  std::size_t draws() const { return draws_; }
  std::size_t records() const { return record_ids_.size(); }
  const std::vector<std::int64_t>& record_ids() const { return record_ids_; }
  double at(std::size_t draw, std::size_t record) const {
    return values_[draw * records() + record];
  }
  double& at(std::size_t draw, std::size_t record) {
    return values_[draw * records() + record];
  }
  std::span<const double> values() const { return values_; }
  // First `draws` rows.
  LogLikelihoodMatrix prefix(std::size_t draws) const;

  bool operator==(const LogLikelihoodMatrix&) const = default;

 private:
  std::size_t draws_ = 0;
  std::vector<std::int64_t> record_ids_;
  std::vector<double> values_;
};

struct RiskResult {
  std::vector<double> risks;  // r_i = max_s |ell_s,i|
  LogLikelihoodMatrix abs_log_likelihood;
};

// r_i = max over draws of |log_likelihood(theta_s, D_i)|. Throws
// InvalidArgument with no draws or no records.
RiskResult compute_risks(const ModelSpec& spec,
                         std::span<const ParameterVector> draws,
                         std::span<const Record> records);
// Streams `draw_count` draws from `moments` (see posterior_draw).
RiskResult compute_risks(const ModelSpec& spec, const SwagMoments& moments,
                         std::size_t draw_count, std::uint64_t seed,
                         std::span<const Record> records);
// Column maxima of an existing matrix.
std::vector<double> risks_from_matrix(const LogLikelihoodMatrix& m);

struct WeightStage {
  bool reweighted = false;
  double k = 0.0;

  std::string to_string() const;  // "initial" or "reweighted(k)"
  static WeightStage parse(const std::string& text);
  bool operator==(const WeightStage&) const = default;
};

struct RiskWeights {
  std::vector<std::int64_t> record_ids;
  std::vector<double> risks;
  std::vector<double> normalized_risks;
  std::vector<double> alphas;
  double scale_c = 1.0;
  double shift_g = 0.0;
  WeightStage stage;

  std::size_t size() const { return record_ids.size(); }
  RecordWeights as_map() const;
  double mean_alpha() const;
};

// rtilde_i = (r_i - min r) / (max r - min r) (all zero when risks are equal);
// alpha_i = clip(c (1 - rtilde_i) + g, 0, 1). Throws InvalidArgument when
// n < 2, c < 0 or sizes disagree.
RiskWeights map_weights(std::span<const std::int64_t> record_ids,
                        std::span<const double> risks, double c, double g);

struct SensitivityReport {
  double delta = 0.0;                   // max_i delta_i
  std::vector<double> record_deltas;    // max_s alpha_i |ell_s,i|
  std::vector<std::int64_t> record_ids;
  std::size_t argmax_draw = 0;
  std::int64_t argmax_record_id = 0;
  std::size_t draw_count = 0;
  double epsilon = 0.0;                 // 2 * delta

  nlohmann::json to_json() const;
  static SensitivityReport from_json(const nlohmann::json& j);
};

// Throws InvalidArgument when alphas.size() != records.
SensitivityReport sensitivity(const LogLikelihoodMatrix& abs_ll,
                              std::span<const double> alphas);

// alpha_w_i = clip(k alpha_i delta / delta_i, 0, 1); records with delta_i = 0
// get weight 1. Throws InvalidArgument unless 0 < k < 1, when report and
// weights disagree, or when delta = 0.
RiskWeights reweight(const RiskWeights& weights, const SensitivityReport& report,
                     double k);

// CSV: record_id,risk,normalized_risk,alpha,stage
void write_risk_weights_csv(const std::filesystem::path& path, const RiskWeights& w);
RiskWeights read_risk_weights_csv(const std::filesystem::path& path);

// Float64 blob holding the |ell| matrix (row-major) with record ids in the
// header.
void save_log_likelihood_matrix(const std::filesystem::path& path,
                                const LogLikelihoodMatrix& m);
LogLikelihoodMatrix load_log_likelihood_matrix(const std::filesystem::path& path);

}  // namespace swagppm

#endif  // SWAGPPM_PPM_H_
