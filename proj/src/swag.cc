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

#include "swagppm/swag.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "swagppm/blob_io.h"
#include "swagppm/errors.h"
#include "swagppm/rng.h"

namespace swagppm {

SwagMoments::SwagMoments(ParameterLayout layout, std::size_t max_rank)
    : layout_(std::move(layout)),
      max_rank_(max_rank),
      mean_(layout_.total_size(), 0.0),
      sq_mean_(layout_.total_size(), 0.0) {}

void SwagMoments::absorb(const ParameterVector& theta) {
  if (!(theta.layout() == layout_)) {
    throw DimensionMismatch("<layout>", "snapshot layout differs from SWAG layout");
  }
  ++count_;
  const double n = static_cast<double>(count_);
  const auto v = theta.values();
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    mean_[i] += (v[i] - mean_[i]) / n;
    sq_mean_[i] += (v[i] * v[i] - sq_mean_[i]) / n;
  }
  if (max_rank_ == 0) return;
  std::vector<double> column(mean_.size());
  for (std::size_t i = 0; i < mean_.size(); ++i) column[i] = v[i] - mean_[i];
  deviations_.push_back(std::move(column));
  if (deviations_.size() > max_rank_) deviations_.pop_front();
}

std::vector<double> SwagMoments::raw_diagonal_variance() const {
  std::vector<double> var(mean_.size());
  for (std::size_t i = 0; i < var.size(); ++i) {
    var[i] = sq_mean_[i] - mean_[i] * mean_[i];
  }
  return var;
}

std::vector<double> SwagMoments::diagonal_variance(std::size_t* clamped) const {
  std::vector<double> var = raw_diagonal_variance();
  std::size_t n = 0;
  for (double& x : var) {
    if (x < 0.0) {
      x = 0.0;
      ++n;
    }
  }
  if (clamped != nullptr) *clamped = n;
  return var;
}

ParameterVector SwagMoments::mean_vector() const {
  return ParameterVector(layout_, mean_);
}

SwagMoments SwagMoments::restore(ParameterLayout layout, std::size_t max_rank,
                                 std::size_t count, std::vector<double> mean,
                                 std::vector<double> sq_mean,
                                 std::deque<std::vector<double>> deviations) {
  SwagMoments m(std::move(layout), max_rank);
  if (mean.size() != m.dimension() || sq_mean.size() != m.dimension()) {
    throw FormatError("SWAG moment vectors do not match the layout");
  }
  if (deviations.size() > max_rank || deviations.size() > count) {
    throw FormatError("too many SWAG deviation columns");
  }
  for (const auto& col : deviations) {
    if (col.size() != m.dimension()) throw FormatError("bad deviation column size");
  }
  m.count_ = count;
  m.mean_ = std::move(mean);
  m.sq_mean_ = std::move(sq_mean);
  m.deviations_ = std::move(deviations);
  return m;
}

ParameterVector covariance_apply(const SwagMoments& moments,
                                 std::span<const double> z_diag,
                                 std::span<const double> z_rank) {
  if (moments.count() == 0) {
    throw InvalidArgument("SWAG moments are empty; absorb a snapshot first");
  }
  if (z_diag.size() != moments.dimension()) {
    throw InvalidArgument("z_diag has the wrong dimension");
  }
  if (z_rank.size() != moments.rank()) {
    throw InvalidArgument("z_rank must have one entry per deviation column");
  }
  const bool low_rank = std::any_of(z_rank.begin(), z_rank.end(),
                                    [](double z) { return z != 0.0; });
  if (low_rank && moments.rank() < 2) {
    throw InvalidArgument("low-rank term needs at least two deviation columns");
  }
  const auto var = moments.diagonal_variance();
  const auto mean = moments.mean();
  std::vector<double> out(mean.begin(), mean.end());
  const double diag_scale = 1.0 / std::sqrt(2.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += diag_scale * std::sqrt(var[i]) * z_diag[i];
  }
  if (low_rank) {
    const double rank_scale =
        1.0 / std::sqrt(2.0 * static_cast<double>(moments.rank() - 1));
    const auto& cols = moments.deviations();
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double coeff = rank_scale * z_rank[k];
      if (coeff == 0.0) continue;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += coeff * cols[k][i];
    }
  }
  return ParameterVector(moments.layout(), std::move(out));
}

ParameterVector posterior_draw(const SwagMoments& moments, std::uint64_t seed,
                               std::size_t index) {
  Rng rng(derive_seed(seed, static_cast<uint64_t>(index)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z_diag(moments.dimension());
  for (double& z : z_diag) z = normal(rng);
  std::vector<double> z_rank(moments.rank(), 0.0);
  if (moments.rank() >= 2) {
    for (double& z : z_rank) z = normal(rng);
  }
  return covariance_apply(moments, z_diag, z_rank);
}

std::vector<ParameterVector> sample_posterior(const SwagMoments& moments,
                                              std::size_t count,
                                              std::uint64_t seed) {
  if (count == 0) throw InvalidArgument("draw count must be >= 1");
  std::vector<ParameterVector> draws;
  draws.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    draws.push_back(posterior_draw(moments, seed, s));
  }
  return draws;
}

void for_each_posterior_draw(
    const SwagMoments& moments, std::size_t count, std::uint64_t seed,
    const std::function<void(std::size_t, const ParameterVector&)>& fn) {
  if (count == 0) throw InvalidArgument("draw count must be >= 1");
  for (std::size_t s = 0; s < count; ++s) fn(s, posterior_draw(moments, seed, s));
}

void save_swag_moments(const std::filesystem::path& path, const SwagMoments& m) {
  std::vector<double> columns;
  columns.reserve(m.rank() * m.dimension());
  for (const auto& col : m.deviations()) columns.insert(columns.end(), col.begin(), col.end());
  nlohmann::json header = {{"kind", "swag_moments"},
                           {"count", m.count()},
                           {"max_rank", m.max_rank()},
                           {"rank", m.rank()},
                           {"layout", m.layout().to_json()}};
  write_blob(path, std::move(header), {m.mean(), m.sq_mean(), columns});
}

SwagMoments load_swag_moments(const std::filesystem::path& path) {
  Blob blob = read_blob(path);
  const auto& h = blob.header;
  if (h.value("kind", "") != "swag_moments") {
    throw FormatError(path.string() + " is not a SWAG moments file");
  }
  auto layout = ParameterLayout::from_json(h.at("layout"));
  const std::size_t p = layout.total_size();
  const auto rank = h.at("rank").get<std::size_t>();
  if (blob.payload.size() != (2 + rank) * p) {
    throw FormatError("SWAG payload size does not match header");
  }
  const auto begin = blob.payload.begin();
  std::vector<double> mean(begin, begin + static_cast<long>(p));
  std::vector<double> sq(begin + static_cast<long>(p), begin + static_cast<long>(2 * p));
  std::deque<std::vector<double>> cols;
  for (std::size_t k = 0; k < rank; ++k) {
    const auto start = begin + static_cast<long>((2 + k) * p);
    cols.emplace_back(start, start + static_cast<long>(p));
  }
  return SwagMoments::restore(std::move(layout), h.at("max_rank").get<std::size_t>(),
                              h.at("count").get<std::size_t>(), std::move(mean),
                              std::move(sq), std::move(cols));
}

}  // namespace swagppm
