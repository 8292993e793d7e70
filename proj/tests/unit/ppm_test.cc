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

#include "swagppm/ppm.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "swagppm/errors.h"
#include "test_util.h"

namespace swagppm {
namespace {

using testing::random_records;
using testing::random_theta;
using testing::small_linear;

LogLikelihoodMatrix two_by_two() {
  return LogLikelihoodMatrix(2, {10, 20}, {1.0, 4.0, 2.0, 3.0});
}

LogLikelihoodMatrix random_matrix(std::mt19937_64& rng, std::size_t s, std::size_t n) {
  std::exponential_distribution<double> e(0.5);
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(100 + i);
  std::vector<double> v(s * n);
  for (auto& x : v) x = e(rng);
  return LogLikelihoodMatrix(s, ids, v);
}

std::vector<double> random_alphas(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a(n);
  for (auto& x : a) x = u(rng);
  return a;
}

TEST(PpmTest, RisksAreColumnMaxima) {
  const auto m = two_by_two();
  const auto r = risks_from_matrix(m);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0], 2.0);
  EXPECT_EQ(r[1], 4.0);
}

TEST(PpmTest, ComputeRisksEvaluatesAbsoluteLogLikelihood) {
  std::mt19937_64 rng(1);
  const ModelSpec spec = small_linear(6, 3);
  const auto records = random_records(rng, spec, 7);
  std::vector<ParameterVector> draws;
  for (int s = 0; s < 4; ++s) draws.push_back(random_theta(rng, spec));
  const auto result = compute_risks(spec, draws, records);
  ASSERT_EQ(result.abs_log_likelihood.draws(), 4u);
  ASSERT_EQ(result.abs_log_likelihood.records(), 7u);
  for (std::size_t i = 0; i < records.size(); ++i) {
    double best = 0.0;
    for (std::size_t s = 0; s < draws.size(); ++s) {
      const double v = std::abs(log_likelihood(spec, draws[s], records[i]));
      EXPECT_EQ(result.abs_log_likelihood.at(s, i), v);
      best = std::max(best, v);
    }
    EXPECT_EQ(result.risks[i], best);
    EXPECT_EQ(result.abs_log_likelihood.record_ids()[i], records[i].id);
  }
  const std::span<const ParameterVector> single(draws.data(), 1);
  const auto one = compute_risks(spec, single, records);
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(one.risks[i], std::abs(log_likelihood(spec, draws[0], records[i])));
  }
  EXPECT_THROW(compute_risks(spec, draws, std::span<const Record>()), InvalidArgument);
  EXPECT_THROW(compute_risks(spec, std::span<const ParameterVector>(), records),
               InvalidArgument);
}

TEST(PpmTest, StreamedRisksMatchMaterializedDraws) {
  std::mt19937_64 rng(2);
  const ModelSpec spec = small_linear(5, 3);
  SwagMoments moments(spec.layout(), 4);
  for (int t = 0; t < 6; ++t) moments.absorb(random_theta(rng, spec));
  const auto records = random_records(rng, spec, 9);
  const auto draws = sample_posterior(moments, 12, 77);
  const auto a = compute_risks(spec, draws, records);
  const auto b = compute_risks(spec, moments, 12, 77, records);
  EXPECT_EQ(a.risks, b.risks);
  EXPECT_EQ(a.abs_log_likelihood, b.abs_log_likelihood);
}

TEST(PpmTest, AddingDrawsNeverLowersRisk) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = random_matrix(rng, 2 + rng() % 20, 2 + rng() % 10);
    std::vector<double> previous(m.records(), 0.0);
    for (std::size_t s = 1; s <= m.draws(); ++s) {
      const auto r = risks_from_matrix(m.prefix(s));
      for (std::size_t i = 0; i < r.size(); ++i) EXPECT_GE(r[i], previous[i]);
      previous = r;
    }
  }
}

TEST(PpmTest, LinearMapExamples) {
  const std::vector<std::int64_t> ids = {1, 2, 3};
  const std::vector<double> risks = {0.0, 5.0, 10.0};
  const auto w = map_weights(ids, risks, 1.0, 0.0);
  EXPECT_EQ(w.alphas, (std::vector<double>{1.0, 0.5, 0.0}));
  EXPECT_EQ(w.normalized_risks, (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(w.stage.to_string(), "initial");
  const auto flat = map_weights(ids, risks, 0.0, 1.0);
  for (double a : flat.alphas) EXPECT_EQ(a, 1.0);
  const std::vector<double> equal = {3.0, 3.0, 3.0};
  const auto same = map_weights(ids, equal, 0.4, 0.3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(same.normalized_risks[i], 0.0);
    EXPECT_DOUBLE_EQ(same.alphas[i], 0.7);
  }
  const auto clipped = map_weights(ids, risks, 2.0, 0.5);
  EXPECT_EQ(clipped.alphas, (std::vector<double>{1.0, 1.0, 0.5}));
  const std::vector<std::int64_t> one_id = {1};
  const std::vector<double> one_risk = {1.0};
  EXPECT_THROW(map_weights(one_id, one_risk, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(map_weights(ids, risks, -1.0, 0.0), InvalidArgument);
}

TEST(PpmTest, NormalizedRisksSpanUnitInterval) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  std::uniform_real_distribution<double> cg(-1.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<std::int64_t> ids(n);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      ids[i] = static_cast<std::int64_t>(i);
      r[i] = u(rng);
    }
    const auto w = map_weights(ids, r, std::abs(cg(rng)), cg(rng));
    EXPECT_EQ(*std::min_element(w.normalized_risks.begin(), w.normalized_risks.end()), 0.0);
    EXPECT_EQ(*std::max_element(w.normalized_risks.begin(), w.normalized_risks.end()), 1.0);
    for (double a : w.alphas) {
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 1.0);
    }
    // Higher risk never earns a larger weight.
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (r[i] < r[j]) EXPECT_GE(w.alphas[i], w.alphas[j]);
      }
    }
  }
}

TEST(PpmTest, SensitivityExamples) {
  const std::vector<double> alphas = {1.0, 0.5};
  const auto rep = sensitivity(two_by_two(), alphas);
  EXPECT_EQ(rep.record_deltas, (std::vector<double>{2.0, 2.0}));
  EXPECT_EQ(rep.delta, 2.0);
  EXPECT_EQ(rep.epsilon, 4.0);
  EXPECT_EQ(rep.draw_count, 2u);
  EXPECT_EQ(rep.argmax_record_id, 10);
  EXPECT_EQ(rep.argmax_draw, 1u);

  const std::vector<double> zeros = {0.0, 0.0};
  const auto none = sensitivity(two_by_two(), zeros);
  EXPECT_EQ(none.delta, 0.0);
  EXPECT_EQ(none.epsilon, 0.0);

  const LogLikelihoodMatrix scale(1, {1}, {2.175});
  const std::vector<double> one = {1.0};
  EXPECT_DOUBLE_EQ(sensitivity(scale, one).epsilon, 4.35);

  const std::vector<double> wrong = {1.0};
  EXPECT_THROW(sensitivity(two_by_two(), wrong), InvalidArgument);
}

TEST(PpmTest, SensitivityIsMonotoneInWeights) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = random_matrix(rng, 1 + rng() % 10, 1 + rng() % 10);
    auto lo = random_alphas(rng, m.records());
    auto hi = lo;
    for (auto& a : hi) a = std::min(1.0, a + u(rng) * 0.3);
    EXPECT_LE(sensitivity(m, lo).delta, sensitivity(m, hi).delta);
  }
}

TEST(PpmTest, SensitivityScalesLinearly) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = random_matrix(rng, 1 + rng() % 10, 1 + rng() % 10);
    const auto a = random_alphas(rng, m.records());
    const double c = u(rng);
    auto scaled = a;
    for (auto& x : scaled) x *= c;
    const double base = sensitivity(m, a).delta;
    EXPECT_NEAR(sensitivity(m, scaled).delta, c * base, 1e-12 * base);
  }
}

TEST(PpmTest, SensitivityGrowsWithDrawPrefix) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = random_matrix(rng, 2 + rng() % 30, 1 + rng() % 10);
    const auto a = random_alphas(rng, m.records());
    double previous = 0.0;
    for (std::size_t s = 1; s <= m.draws(); ++s) {
      const double d = sensitivity(m.prefix(s), a).delta;
      EXPECT_GE(d, previous);
      previous = d;
    }
  }
}

TEST(PpmTest, ReweightExample) {
  const std::vector<std::int64_t> ids = {10, 20};
  const std::vector<double> risks = {2.0, 4.0};
  RiskWeights w = map_weights(ids, risks, 1.0, 0.0);
  w.alphas = {1.0, 0.5};
  const auto rep = sensitivity(two_by_two(), w.alphas);
  const auto rw = reweight(w, rep, 0.95);
  ASSERT_EQ(rw.alphas.size(), 2u);
  EXPECT_NEAR(rw.alphas[0], 0.95, 1e-15);
  EXPECT_NEAR(rw.alphas[1], 0.475, 1e-15);
  EXPECT_EQ(rw.stage.to_string(), "reweighted(0.95)");
  EXPECT_EQ(WeightStage::parse("reweighted(0.95)"), rw.stage);
  EXPECT_THROW(reweight(w, rep, 1.0), InvalidArgument);
  EXPECT_THROW(reweight(w, rep, 0.0), InvalidArgument);
  const std::vector<double> zeros = {0.0, 0.0};
  EXPECT_THROW(reweight(w, sensitivity(two_by_two(), zeros), 0.5), InvalidArgument);
}

TEST(PpmTest, ReweightEqualizesUnclippedContributions) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ku(0.05, 0.99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = random_matrix(rng, 1 + rng() % 10, 2 + rng() % 10);
    const auto risks = risks_from_matrix(m);
    RiskWeights w = map_weights(m.record_ids(), risks, 1.0, 0.0);
    w.alphas = random_alphas(rng, m.records());
    if (trial % 5 == 0) w.alphas[0] = 0.0;
    const auto rep = sensitivity(m, w.alphas);
    if (rep.delta == 0.0) continue;
    const double k = ku(rng);
    const auto rw = reweight(w, rep, k);
    const auto after = sensitivity(m, rw.alphas);
    for (std::size_t i = 0; i < m.records(); ++i) {
      if (rep.record_deltas[i] == 0.0) {
        EXPECT_EQ(rw.alphas[i], 1.0);
      } else if (rw.alphas[i] < 1.0) {
        EXPECT_NEAR(after.record_deltas[i], k * rep.delta, 1e-12 * rep.delta);
      }
    }
  }
}

TEST(PpmTest, ReweightedSensitivityNeverExceedsOriginalWhenNoWeightSaturates) {
  // Without saturated zero-delta records, the identity bounds the new maximum.
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = random_matrix(rng, 1 + rng() % 10, 2 + rng() % 10);
    RiskWeights w = map_weights(m.record_ids(), risks_from_matrix(m), 1.0, 0.0);
    w.alphas = random_alphas(rng, m.records());
    for (auto& a : w.alphas) a = 0.05 + 0.95 * a;
    const auto rep = sensitivity(m, w.alphas);
    const auto rw = reweight(w, rep, 0.95);
    EXPECT_LE(sensitivity(m, rw.alphas).delta, rep.delta * (1 + 1e-12));
  }
}

TEST(PpmTest, WeightsCsvRoundTrip) {
  std::mt19937_64 rng(10);
  const auto m = random_matrix(rng, 3, 6);
  auto w = map_weights(m.record_ids(), risks_from_matrix(m), 1.0, 0.0);
  const auto rw = reweight(w, sensitivity(m, w.alphas), 0.9);
  const auto dir = std::filesystem::temp_directory_path();
  for (const auto& src : {w, rw}) {
    write_risk_weights_csv(dir / "swagppm_weights.csv", src);
    const auto back = read_risk_weights_csv(dir / "swagppm_weights.csv");
    EXPECT_EQ(back.record_ids, src.record_ids);
    EXPECT_EQ(back.risks, src.risks);
    EXPECT_EQ(back.normalized_risks, src.normalized_risks);
    EXPECT_EQ(back.alphas, src.alphas);
    EXPECT_EQ(back.stage, src.stage);
  }
  save_log_likelihood_matrix(dir / "swagppm_ll.bin", m);
  EXPECT_EQ(load_log_likelihood_matrix(dir / "swagppm_ll.bin"), m);
  std::filesystem::remove(dir / "swagppm_weights.csv");
  std::filesystem::remove(dir / "swagppm_ll.bin");
}

TEST(PpmTest, SensitivityReportJsonRoundTrip) {
  const std::vector<double> alphas = {1.0, 0.5};
  const auto rep = sensitivity(two_by_two(), alphas);
  const auto back = SensitivityReport::from_json(rep.to_json());
  EXPECT_EQ(back.delta, rep.delta);
  EXPECT_EQ(back.epsilon, rep.epsilon);
  EXPECT_EQ(back.record_deltas, rep.record_deltas);
  EXPECT_EQ(back.argmax_record_id, rep.argmax_record_id);
}

TEST(PpmTest, MatrixRejectsInvalidEntries) {
  EXPECT_THROW(LogLikelihoodMatrix(1, {1, 2}, {1.0}), InvalidArgument);
  EXPECT_THROW(LogLikelihoodMatrix(1, {1}, {-1.0}), InvalidArgument);
  EXPECT_THROW(LogLikelihoodMatrix(1, {1}, {std::nan("")}), InvalidArgument);
}

}  // namespace
}  // namespace swagppm
