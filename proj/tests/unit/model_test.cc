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

#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "swagppm/errors.h"
#include "test_util.h"

namespace swagppm {
namespace {

using testing::finite_difference_gradient;
using testing::max_relative_error;
using testing::random_records;
using testing::random_theta;
using testing::small_linear;
using testing::small_mlp;

// softmax-linear, 1 input, 2 classes, weight row (0, w1), zero bias.
ParameterVector two_class_theta(double w1) {
  return ParameterVector(small_linear(1, 2).layout(), {0.0, w1, 0.0, 0.0});
}

Record unit_record(int label) { return {7, {{0}, {1.0}}, label}; }

TEST(ModelTest, LayoutPartitionsParameterRange) {
  for (const ModelSpec& spec : {small_linear(5, 3), small_mlp(5, 2, 3)}) {
    const ParameterLayout layout = spec.layout();
    std::size_t next = 0;
    for (const auto& t : layout.tensors()) {
      EXPECT_EQ(t.offset, next) << t.name;
      next += t.size();
    }
    EXPECT_EQ(next, layout.total_size());
  }
  EXPECT_EQ(small_linear(5, 3).parameter_count(), 5u * 3 + 3);
  EXPECT_EQ(small_mlp(5, 2, 3).parameter_count(), 5u * 2 + 2 + 2 * 3 + 3);
}

TEST(ModelTest, ZeroParametersGiveUniformProbabilities) {
  const ModelSpec spec = small_linear(6, 4);
  const ParameterVector theta(spec.layout());
  std::mt19937_64 rng(1);
  const auto p = forward(spec, theta, testing::random_sparse(rng, 6, 3));
  ASSERT_EQ(p.size(), 4u);
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(ModelTest, HandEvaluatedSoftmax) {
  // logits (0, ln 3) -> (1/4, 3/4)
  const auto p = forward(small_linear(1, 2), two_class_theta(std::log(3.0)),
                         unit_record(1).features);
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(ModelTest, ProbabilitiesSumToOne) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const ModelSpec spec = trial % 2 ? small_linear(8, 5) : small_mlp(8, 6, 5);
    const auto theta = random_theta(rng, spec, 3.0);
    const auto p = forward(spec, theta, testing::random_sparse(rng, 8, 8));
    EXPECT_LT(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0), 1e-12);
    for (double v : p) EXPECT_GT(v, 0.0);
  }
}

TEST(ModelTest, LogLikelihoodExamples) {
  const ModelSpec spec4 = small_linear(3, 4);
  const Record r{0, {{1}, {0.5}}, 2};
  EXPECT_NEAR(log_likelihood(spec4, ParameterVector(spec4.layout()), r),
              std::log(0.25), 1e-15);
  EXPECT_NEAR(log_likelihood(small_linear(1, 2), two_class_theta(std::log(3.0)),
                             unit_record(1)),
              std::log(0.75), 1e-15);
  // Logit gap growing without bound drives ell to 0 from below.
  double previous = -std::numeric_limits<double>::infinity();
  for (double gap : {1.0, 10.0, 30.0, 100.0}) {
    const double ll = log_likelihood(small_linear(1, 2), two_class_theta(gap),
                                     unit_record(1));
    EXPECT_LE(ll, 0.0);
    EXPECT_GE(ll, previous);
    previous = ll;
  }
  EXPECT_GT(previous, -1e-12);
}

TEST(ModelTest, LogLikelihoodIsFlooredNotInfinite) {
  const double ll = log_likelihood(small_linear(1, 2), two_class_theta(1e4),
                                   unit_record(0));
  EXPECT_TRUE(std::isfinite(ll));
  EXPECT_DOUBLE_EQ(ll, std::log(kProbabilityFloor));
}

TEST(ModelTest, LogLikelihoodEqualsLogOfForward) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const ModelSpec spec = trial % 2 ? small_linear(6, 4) : small_mlp(6, 3, 4);
    const auto theta = random_theta(rng, spec, 2.0);
    for (const auto& r : random_records(rng, spec, 4)) {
      const auto p = forward(spec, theta, r.features);
      EXPECT_EQ(log_likelihood(spec, theta, r), std::log(p[r.label]));
    }
  }
}

TEST(ModelTest, PredictBreaksTiesTowardLowestClass) {
  const ModelSpec spec = small_linear(2, 3);
  EXPECT_EQ(predict(spec, ParameterVector(spec.layout()), {{0}, {1.0}}), 0);
}

TEST(ModelTest, DimensionMismatchNamesTensor) {
  const ModelSpec mlp = small_mlp(4, 3, 2);
  const ParameterVector wrong(small_mlp(4, 5, 2).layout());
  try {
    forward(mlp, wrong, {{0}, {1.0}});
    FAIL() << "expected DimensionMismatch";
  } catch (const DimensionMismatch& e) {
    EXPECT_EQ(e.tensor(), "hidden.weight");
  }
  const ModelSpec lin = small_linear(4, 2);
  try {
    forward(lin, ParameterVector(lin.layout()), {{9}, {1.0}});
    FAIL() << "expected DimensionMismatch";
  } catch (const DimensionMismatch& e) {
    EXPECT_EQ(e.tensor(), "weight");
  }
  EXPECT_THROW(ParameterVector(lin.layout(), {1.0, 2.0}), DimensionMismatch);
}

TEST(ModelTest, RejectsNonFiniteParametersAndBadSparseVectors) {
  const ModelSpec spec = small_linear(1, 2);
  EXPECT_THROW(ParameterVector(spec.layout(), {0, 0, 0, std::nan("")}),
               InvalidArgument);
  EXPECT_THROW((SparseVector{{2, 1}, {1.0, 1.0}}.validate()), InvalidArgument);
  EXPECT_THROW((SparseVector{{1, 1}, {1.0, 1.0}}.validate()), InvalidArgument);
}

TEST(ModelTest, UnitWeightsGiveMeanNllGradient) {
  std::mt19937_64 rng(4);
  const ModelSpec spec = small_mlp(5, 3, 4);
  const auto theta = random_theta(rng, spec);
  const auto records = random_records(rng, spec, 6);
  std::vector<WeightedRecord> batch;
  for (const auto& r : records) batch.push_back({&r, 1.0});
  const auto g = weighted_nll_gradient(spec, theta, batch);
  // Independent route: densify each record gradient and average.
  std::vector<double> mean(theta.size(), 0.0);
  for (const auto& r : records) {
    const auto rg = record_nll_gradient(spec, theta, r);
    for (std::size_t k = 0; k < rg.indices.size(); ++k) {
      mean[rg.indices[k]] += rg.values[k] / static_cast<double>(records.size());
    }
  }
  for (std::size_t i = 0; i < mean.size(); ++i) EXPECT_NEAR(g[i], mean[i], 1e-15);
}

TEST(ModelTest, ZeroWeightsAnnihilateGradient) {
  std::mt19937_64 rng(5);
  const ModelSpec spec = small_linear(5, 3);
  const auto theta = random_theta(rng, spec);
  const auto records = random_records(rng, spec, 4);
  std::vector<WeightedRecord> batch;
  for (const auto& r : records) batch.push_back({&r, 0.0});
  const auto g = weighted_nll_gradient(spec, theta, batch);
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(ModelTest, RejectsWeightsOutsideUnitInterval) {
  const ModelSpec spec = small_linear(1, 2);
  const Record r = unit_record(0);
  const ParameterVector theta(spec.layout());
  const WeightedRecord over[] = {{&r, 1.5}};
  const WeightedRecord under[] = {{&r, -0.1}};
  EXPECT_THROW(weighted_nll_gradient(spec, theta, over), InvalidArgument);
  EXPECT_THROW(weighted_nll_gradient(spec, theta, under), InvalidArgument);
  EXPECT_THROW(weighted_nll_gradient(spec, theta, {}), InvalidArgument);
}

void check_finite_differences(ModelSpec spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  spec.weight_decay = 0.1 * unit(rng);
  const auto theta = random_theta(rng, spec);
  ASSERT_LE(theta.size(), 50u);
  const auto records = random_records(rng, spec, 5);
  std::vector<WeightedRecord> batch;
  for (const auto& r : records) batch.push_back({&r, unit(rng)});
  const auto analytic = weighted_nll_gradient(spec, theta, batch);
  const auto numeric = finite_difference_gradient(
      theta, [&](const ParameterVector& t) { return weighted_nll(spec, t, batch); });
  EXPECT_LT(max_relative_error(analytic.values(), numeric), 1e-5);
}

TEST(ModelTest, GradientMatchesFiniteDifferencesSoftmaxLinear) {
  for (std::uint64_t s = 0; s < 20; ++s) check_finite_differences(small_linear(4, 3), s);
}

TEST(ModelTest, GradientMatchesFiniteDifferencesMlp) {
  for (std::uint64_t s = 0; s < 20; ++s) check_finite_differences(small_mlp(3, 4, 3), s);
}

TEST(ModelTest, GradientIsLinearInSingletonWeight) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unit(0.0, 0.5);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelSpec spec = trial % 2 ? small_linear(4, 3) : small_mlp(4, 3, 3);
    const auto theta = random_theta(rng, spec);
    const Record r = random_records(rng, spec, 1)[0];
    const double a = unit(rng);
    const double b = unit(rng);
    const WeightedRecord wa[] = {{&r, a}};
    const WeightedRecord wb[] = {{&r, b}};
    const WeightedRecord wab[] = {{&r, a + b}};
    const auto sum = weighted_nll_gradient(spec, theta, wa) +
                     weighted_nll_gradient(spec, theta, wb);
    const auto joint = weighted_nll_gradient(spec, theta, wab);
    for (std::size_t i = 0; i < sum.size(); ++i) {
      EXPECT_NEAR(sum[i], joint[i], 1e-14 * (1.0 + std::abs(joint[i])));
    }
  }
}

TEST(ModelTest, ParameterVectorsCompose) {
  const ModelSpec spec = small_linear(2, 2);
  ParameterVector a(spec.layout(), {1, 2, 3, 4, 5, 6});
  const ParameterVector b(spec.layout(), {1, 1, 1, 1, 1, 1});
  const auto c = a + 2.0 * b;
  EXPECT_EQ(c[0], 3.0);
  EXPECT_EQ(c[5], 8.0);
  EXPECT_THROW(a += ParameterVector(small_linear(3, 2).layout()), DimensionMismatch);
  EXPECT_EQ(a.tensor("bias").size(), 2u);
  EXPECT_EQ(a.tensor("bias")[0], 5.0);
}

TEST(ModelTest, CheckpointRoundTripIsBitExact) {
  std::mt19937_64 rng(7);
  const auto dir = std::filesystem::temp_directory_path() / "swagppm_model_test";
  std::filesystem::create_directories(dir);
  for (const ModelSpec& spec : {small_linear(6, 3), small_mlp(4, 3, 2)}) {
    Checkpoint ckpt{spec, random_theta(rng, spec, 1e3), {{"epoch", 3}}};
    auto& v = ckpt.theta.mutable_values();
    v[0] = -0.0;
    v[1] = std::numeric_limits<double>::denorm_min();
    v[2] = std::numeric_limits<double>::max();
    const auto path = dir / "ckpt.bin";
    save_checkpoint(path, ckpt);
    const Checkpoint back = load_checkpoint(path);
    ASSERT_EQ(back.theta.size(), ckpt.theta.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(back.theta[i]),
                std::bit_cast<std::uint64_t>(ckpt.theta[i]));
    }
    EXPECT_EQ(back.theta.layout(), ckpt.theta.layout());
    EXPECT_EQ(back.spec.to_json(), spec.to_json());
    EXPECT_EQ(back.metadata.at("epoch"), 3);
  }
  std::filesystem::remove_all(dir);
}

TEST(ModelTest, MlpInitializationIsSeededAndScaled) {
  const ModelSpec spec = small_mlp(16, 4, 3);
  const auto a = initialize_parameters(spec, 11);
  EXPECT_EQ(a, initialize_parameters(spec, 11));
  EXPECT_NE(a, initialize_parameters(spec, 12));
  for (double w : a.tensor("hidden.weight")) EXPECT_LE(std::abs(w), 0.25);
  for (double b : a.tensor("hidden.bias")) EXPECT_EQ(b, 0.0);
  const auto linear = initialize_parameters(small_linear(4, 3), 1);
  for (double w : linear.values()) EXPECT_EQ(w, 0.0);
}

}  // namespace
}  // namespace swagppm
