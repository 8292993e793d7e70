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

#include "swagppm/pipeline.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "swagppm/errors.h"

namespace swagppm {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("swagppm_pipeline_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> small_overrides() {
  return {
      "data.synthetic.num_classes=8",
      "data.synthetic.total_records=400",
      "data.synthetic.vocab_size=400",
      "data.feature_dim=256",
      "finetune.epochs=2",
      "swag.epochs=4",
      "swag.max_rank=3",
      "swag.draws=12",
      "nonprivate.epochs=3",
      "dpsgd.epochs=3",
      "dpsgd.batch_size=64",
      "dpsgd.learning_rate=4",
      "dpsgd.delta_sweep=[0.01, 0.5]",
  };
}

RunConfig small_config(std::vector<std::string> extra = {}, std::uint64_t seed = 7) {
  auto overrides = small_overrides();
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  return load_run_config(std::nullopt, overrides, seed, std::nullopt);
}

std::set<std::string> directory_entries(const fs::path& dir) {
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.insert(e.path().filename().string());
  return names;
}

TEST(RunConfigTest, DefaultsMatchThePublishedSchedule) {
  const RunConfig c = RunConfig::from_json(default_run_config());
  EXPECT_EQ(c.finetune.epochs, 10);
  EXPECT_EQ(c.swag.epochs, 20);
  EXPECT_EQ(c.finetune.epochs + c.swag.epochs, 30);
  EXPECT_EQ(c.draws, 500u);
  EXPECT_DOUBLE_EQ(c.k, 0.95);
  EXPECT_EQ(c.swag.optimizer, OptimizerKind::kSgdConstant);
  EXPECT_DOUBLE_EQ(c.dpsgd.target_epsilon, 4.0);
  EXPECT_DOUBLE_EQ(c.dpsgd.delta, 1e-4);
  EXPECT_EQ(c.dpsgd.delta_sweep, (std::vector<double>{1e-3, 1e-2, 0.1, 0.99}));
  EXPECT_EQ(c.synthetic.num_classes, 20);
  EXPECT_DOUBLE_EQ(c.synthetic.zipf_exponent, 1.2);
  EXPECT_EQ(c.synthetic.total_records, 4000u);
  EXPECT_DOUBLE_EQ(c.train_fraction, 0.5);
}

TEST(RunConfigTest, UnknownKeysAndTypeMismatchesAreRejected) {
  EXPECT_THROW(merge_run_config({{"swag", {{"epoch", 3}}}}), ConfigError);
  EXPECT_THROW(merge_run_config({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(merge_run_config({{"swag", {{"epochs", "many"}}}}), ConfigError);
  EXPECT_THROW(merge_run_config({{"schema_version", 99}}), ConfigError);
  EXPECT_NO_THROW(merge_run_config({{"swag", {{"epochs", 3}}}}));
}

TEST(RunConfigTest, OverridesParseJsonOrFallBackToString) {
  json doc = default_run_config();
  apply_override(doc, "ppm.c=0.25");
  apply_override(doc, "model.family=mlp-one-hidden");
  apply_override(doc, "dpsgd.delta_sweep=[0.5]");
  EXPECT_DOUBLE_EQ(doc["ppm"]["c"].get<double>(), 0.25);
  EXPECT_EQ(doc["model"]["family"], "mlp-one-hidden");
  EXPECT_EQ(doc["dpsgd"]["delta_sweep"], json::array({0.5}));
  EXPECT_THROW(apply_override(doc, "ppm.z=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "no-equals-sign"), ConfigError);
  EXPECT_THROW(apply_override(doc, "=3"), ConfigError);
}

TEST(RunConfigTest, InvalidValuesAreRejected) {
  EXPECT_THROW(small_config({"ppm.k=1.5"}), ConfigError);
  EXPECT_THROW(small_config({"ppm.c=-1"}), ConfigError);
  EXPECT_THROW(small_config({"data.source=csv", "data.csv_path=/no/such/file.csv"}),
               ConfigError);
  EXPECT_THROW(small_config({"data.train_fraction=0"}), ConfigError);
}

TEST(RunConfigTest, SeedAndOutputShortcutsWin) {
  const RunConfig c = load_run_config(std::nullopt, {"seed=3"}, 11, fs::path("x/y"));
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.output_dir, fs::path("x/y"));
}

TEST(PhaseSeedsTest, DeterministicAndDistinct) {
  const PhaseSeeds a = PhaseSeeds::derive(5);
  const PhaseSeeds b = PhaseSeeds::derive(5);
  const PhaseSeeds c = PhaseSeeds::derive(6);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_NE(a.to_json(), c.to_json());
  const std::set<std::uint64_t> distinct{a.data,         a.split,        a.init,
                                         a.finetune,     a.swag,         a.draws_round1,
                                         a.draws_round2, a.draws_round3, a.release,
                                         a.nonprivate,   a.dpsgd};
  EXPECT_EQ(distinct.size(), 11u);
}

TEST(PipelineTest, PreparedDataIsDeterministicAndSplitEvenly) {
  const RunConfig config = small_config();
  const PhaseSeeds seeds = PhaseSeeds::derive(config.seed);
  const PreparedData a = prepare_data(config, seeds);
  const PreparedData b = prepare_data(config, seeds);
  EXPECT_EQ(a.train.size() + a.test.size(), a.dataset.size());
  EXPECT_LE(a.train.size() > a.test.size() ? a.train.size() - a.test.size()
                                           : a.test.size() - a.train.size(),
            a.dataset.num_classes());
  EXPECT_EQ(a.base, b.base);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].id, b.train[i].id);
}

// All weights at one: the pseudo-likelihood rounds reduce to plain SWAG.
TEST(PipelineTest, UnitWeightsReproduceWeightFreeMomentsBitForBit) {
  const RunConfig config = small_config({"ppm.c=0", "ppm.g=1"});
  const PhaseSeeds seeds = PhaseSeeds::derive(config.seed);
  const PreparedData data = prepare_data(config, seeds);
  const SwagPpmOutcome out = run_swag_ppm(config, seeds, data, false, {});
  for (double a : out.initial_weights.alphas) ASSERT_EQ(a, 1.0);
  const SwagRound plain = run_swag_round(config, seeds, data, nullptr, {});
  EXPECT_TRUE(out.ppm.moments == plain.moments);
  EXPECT_TRUE(out.round1 == plain.moments);
}

TEST(PipelineTest, PersistedArtifactsReproduceTheReportedEpsilon) {
  const fs::path dir = scratch_dir("artifacts");
  const RunConfig config = small_config();
  const PhaseSeeds seeds = PhaseSeeds::derive(config.seed);
  const PreparedData data = prepare_data(config, seeds);
  const SwagPpmOutcome out = run_swag_ppm(config, seeds, data, true, dir);

  const fs::path round2 = dir / "internal" / "round2";
  const LogLikelihoodMatrix m = load_log_likelihood_matrix(round2 / "abs_log_likelihood.bin");
  const RiskWeights w = read_risk_weights_csv(dir / "internal" / "round1" / "weights.csv");
  EXPECT_EQ(m.draws(), config.draws);
  EXPECT_EQ(m.record_ids(), w.record_ids);
  const SensitivityReport recomputed = sensitivity(m, w.alphas);
  EXPECT_EQ(recomputed.epsilon, out.ppm.report.epsilon);
  EXPECT_EQ(recomputed.epsilon, 2.0 * recomputed.delta);

  std::ifstream in(round2 / "sensitivity.json");
  const SensitivityReport persisted = SensitivityReport::from_json(json::parse(in));
  EXPECT_EQ(persisted.epsilon, out.ppm.report.epsilon);

  ASSERT_TRUE(out.reweighted.has_value());
  const fs::path round3 = dir / "internal" / "round3";
  const SensitivityReport rep3 =
      sensitivity(load_log_likelihood_matrix(round3 / "abs_log_likelihood.bin"),
                  read_risk_weights_csv(round3 / "weights.csv").alphas);
  EXPECT_EQ(rep3.epsilon, out.reweighted->report.epsilon);
}

TEST(PipelineTest, ReleaseDirectoriesHoldOnlyTheModel) {
  const fs::path dir = scratch_dir("release");
  const RunConfig config = small_config();
  const PhaseSeeds seeds = PhaseSeeds::derive(config.seed);
  const PreparedData data = prepare_data(config, seeds);
  const SwagPpmOutcome out = run_swag_ppm(config, seeds, data, true, dir);
  EXPECT_EQ(directory_entries(dir / "release"), std::set<std::string>{"model.ckpt"});
  EXPECT_EQ(directory_entries(dir / "release-reweighted"), std::set<std::string>{"model.ckpt"});
  const Checkpoint ckpt = load_checkpoint(dir / "release" / "model.ckpt");
  EXPECT_EQ(ckpt.theta, out.ppm.theta);
  EXPECT_EQ(ckpt.theta, posterior_draw(out.ppm.moments, seeds.release, 0));
}

TEST(PipelineTest, ReweightedRoundRaisesMeanAlpha) {
  const RunConfig config = small_config();
  const PhaseSeeds seeds = PhaseSeeds::derive(config.seed);
  const PreparedData data = prepare_data(config, seeds);
  const SwagPpmOutcome out = run_swag_ppm(config, seeds, data, true, {});
  ASSERT_TRUE(out.reweighted.has_value());
  const RiskWeights& rw = out.reweighted->weights;
  EXPECT_TRUE(rw.stage.reweighted);
  EXPECT_DOUBLE_EQ(rw.stage.k, config.k);
  EXPECT_GE(rw.mean_alpha(), out.initial_weights.mean_alpha());
  for (std::size_t i = 0; i < rw.size(); ++i) {
    EXPECT_GE(rw.alphas[i], 0.0);
    EXPECT_LE(rw.alphas[i], 1.0);
  }
}

TEST(PipelineTest, FailingPhaseIsNamed) {
  const RunConfig config =
      small_config({"finetune.optimizer=sgd-constant", "finetune.learning_rate=1e307"});
  const PhaseSeeds seeds = PhaseSeeds::derive(config.seed);
  const PreparedData data = prepare_data(config, seeds);
  try {
    run_swag_ppm(config, seeds, data, false, {});
    FAIL() << "expected PhaseError";
  } catch (const PhaseError& e) {
    EXPECT_EQ(e.phase(), "fine-tune");
  }
}

TEST(PipelineTest, DpSgdMeetsItsTarget) {
  const RunConfig config = small_config();
  const PhaseSeeds seeds = PhaseSeeds::derive(config.seed);
  const PreparedData data = prepare_data(config, seeds);
  const DpSgdOutcome dp = train_dpsgd(config, seeds, data, config.dpsgd.delta);
  EXPECT_LE(dp.budget.epsilon, config.dpsgd.target_epsilon);
  EXPECT_GT(dp.noise_multiplier, 0.0);
  EXPECT_EQ(dp.budget.delta, config.dpsgd.delta);
  EXPECT_DOUBLE_EQ(dp.sampling_rate, static_cast<double>(config.dpsgd.batch_size) /
                                         static_cast<double>(data.train.size()));
}

TEST(BenchmarkTest, DeterministicWithReportsAndJsonRoundTrip) {
  RunConfig a = small_config();
  a.output_dir = scratch_dir("bench_a");
  RunConfig b = small_config();
  b.output_dir = scratch_dir("bench_b");
  const BenchmarkResult ra = run_benchmark(a);
  const BenchmarkResult rb = run_benchmark(b);

  ASSERT_EQ(ra.rows.size(), 4u);
  for (const char* name : {kNonPrivate, kSwagPpm, kSwagPpmReweighted, kDpSgd}) {
    const ModelRow* x = ra.row(name);
    const ModelRow* y = rb.row(name);
    ASSERT_NE(x, nullptr) << name;
    ASSERT_NE(y, nullptr) << name;
    EXPECT_TRUE(x->ok()) << x->error;
    EXPECT_EQ(x->f1_weighted, y->f1_weighted) << name;
    EXPECT_EQ(x->f1_macro, y->f1_macro) << name;
    EXPECT_EQ(x->f1_per_class, y->f1_per_class) << name;
    EXPECT_GE(x->f1_weighted, 0.0);
    EXPECT_LE(x->f1_weighted, 1.0);
  }
  EXPECT_EQ(ra.swag_ppm_epsilon, rb.swag_ppm_epsilon);
  EXPECT_EQ(ra.sweep.size(), rb.sweep.size());

  for (const char* f : {"summary.json", "manifest.json", "model_comparison.csv", "model_comparison.md",
                        "per_class.csv", "quartiles.csv", "delta_sweep.csv",
                        "class_size_f1.csv", "weights_by_class.csv"}) {
    EXPECT_TRUE(fs::exists(a.output_dir / f)) << f;
  }

  const BenchmarkResult back = benchmark_from_json(benchmark_to_json(ra));
  EXPECT_EQ(benchmark_to_json(back), benchmark_to_json(ra));
  EXPECT_THROW(benchmark_from_json(json{{"rows", 3}}), FormatError);
}

}  // namespace
}  // namespace swagppm
