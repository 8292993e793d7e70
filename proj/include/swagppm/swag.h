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

// SWAG: Gaussian posterior approximation from constant-rate SGD snapshots.
//
// The posterior is N(mean, (diag + low_rank) / 2) with
//   diag     = mean of squares - square of mean
//   low_rank = D D^T / (K - 1),
// where column t of D is theta_t minus the running mean after t snapshots and
// only the last K columns are retained.

#ifndef SWAGPPM_SWAG_H_
#define SWAGPPM_SWAG_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "swagppm/model.h"

namespace swagppm {

inline constexpr std::size_t kDefaultSwagRank = 20;

class SwagMoments {
 public:
  SwagMoments() = default;
  SwagMoments(ParameterLayout layout, std::size_t max_rank = kDefaultSwagRank);

  // Folds in one epoch snapshot. Throws DimensionMismatch on layout mismatch.
  void absorb(const ParameterVector& theta);

  std::size_t count() const { return count_; }
  std::size_t max_rank() const { return max_rank_; }
  // Number of deviation columns currently retained (<= max_rank).
  std::size_t rank() const { return deviations_.size(); }
  const ParameterLayout& layout() const { return layout_; }
  std::size_t dimension() const { return layout_.total_size(); }

  std::span<const double> mean() const { return mean_; }
  std::span<const double> sq_mean() const { return sq_mean_; }
  // Oldest first.
  const std::deque<std::vector<double>>& deviations() const { return deviations_; }

  // sq_mean - mean^2, unclamped.
  std::vector<double> raw_diagonal_variance() const;
  // Clamped at zero; `clamped` (optional) receives the number of entries that
  // were negative.
  std::vector<double> diagonal_variance(std::size_t* clamped = nullptr) const;

  ParameterVector mean_vector() const;

  bool operator==(const SwagMoments&) const = default;

  // Rebuilds moments from persisted state.
  static SwagMoments restore(ParameterLayout layout, std::size_t max_rank,
                             std::size_t count, std::vector<double> mean,
                             std::vector<double> sq_mean,
                             std::deque<std::vector<double>> deviations);

 private:
  ParameterLayout layout_;
  std::size_t max_rank_ = kDefaultSwagRank;
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> sq_mean_;
  std::deque<std::vector<double>> deviations_;
};

// mean + diag^{1/2} .* z_diag / sqrt(2) + D z_rank / sqrt(2 (K - 1)).
// z_rank must have rank() entries. Throws InvalidArgument if no snapshot has
// been absorbed, if sizes disagree, or if a nonzero z_rank is supplied with
// fewer than two deviation columns.
ParameterVector covariance_apply(const SwagMoments& moments,
                                 std::span<const double> z_diag,
                                 std::span<const double> z_rank);

// Draw number `index` of the stream identified by `seed`. With fewer than two
// deviation columns the low-rank term is omitted.
ParameterVector posterior_draw(const SwagMoments& moments, std::uint64_t seed,
                               std::size_t index);

// `count` independent draws; draw s equals posterior_draw(moments, seed, s).
std::vector<ParameterVector> sample_posterior(const SwagMoments& moments,
                                              std::size_t count,
                                              std::uint64_t seed);

// Streams the same draws as sample_posterior without holding them.
void for_each_posterior_draw(
    const SwagMoments& moments, std::size_t count, std::uint64_t seed,
    const std::function<void(std::size_t, const ParameterVector&)>& fn);

// JSON header (count, max_rank, rank, layout) + mean, sq_mean and the
// deviation matrix column-major, all float64.
void save_swag_moments(const std::filesystem::path& path, const SwagMoments& m);
SwagMoments load_swag_moments(const std::filesystem::path& path);

}  // namespace swagppm

#endif  // SWAGPPM_SWAG_H_
