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

// End-to-end orchestration: run configuration, the SWAG-PPM pipeline with its
// optional reweighting round, the non-private and DP-SGD comparators, and the
// benchmark reports.

#ifndef SWAGPPM_PIPELINE_H_
#define SWAGPPM_PIPELINE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "swagppm/accountant.h"
#include "swagppm/data.h"
#include "swagppm/eval.h"
#include "swagppm/model.h"
#include "swagppm/ppm.h"
#include "swagppm/swag.h"
#include "swagppm/trainer.h"

namespace swagppm {

inline constexpr int kRunConfigSchemaVersion = 1;

// The full default configuration document. Every accepted key appears here.
nlohmann::json default_run_config();

// Overlays `user` onto the defaults. Throws ConfigError on unknown keys, type
// mismatches or a wrong schema_version.
nlohmann::json merge_run_config(const nlohmann::json& user);

// Applies "dotted.key=value". The value is parsed as JSON when possible and
// taken as a string otherwise. Throws ConfigError for unknown keys.
void apply_override(nlohmann::json& doc, const std::string& assignment);

struct PhaseConfig {
  OptimizerKind optimizer = OptimizerKind::kAdaptive;
  double learning_rate = 0.01;
  std::size_t batch_size = 16;
  int epochs = 10;
  double weight_decay = 0.0;

  TrainConfig train_config(std::uint64_t seed) const;
};

struct DpSgdConfig {
  double target_epsilon = 4.0;
  double delta = 1e-4;
  double clip_norm = 1.0;
  std::size_t batch_size = 512;
  double learning_rate = 0.001;
  int epochs = 30;
  double weight_decay = 0.0;
  std::vector<double> delta_sweep;
};

struct RunConfig {
  nlohmann::json document;

  // data
  std::string source = "synthetic";  // "synthetic" | "csv"
  std::filesystem::path csv_path;
  SyntheticSpec synthetic;
  std::size_t feature_dim = 4096;
  std::size_t cap = 0;  // 0 disables the per-class cap
  double sampling_fraction = 1.0;
  double train_fraction = 0.5;

  // model
  ModelFamily family = ModelFamily::kSoftmaxLinear;
  std::size_t hidden_dim = 0;

  // phases
  PhaseConfig finetune;
  PhaseConfig swag;
  std::size_t swag_rank = kDefaultSwagRank;
  std::size_t draws = 500;
  double c = 1.0;
  double g = 0.0;
  double k = 0.95;
  std::string nonprivate_schedule = "adaptive";  // or "finetune-swag"
  PhaseConfig nonprivate;
  DpSgdConfig dpsgd;

  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/default";
  bool verbose = false;

  // Parses a merged document. Throws ConfigError on invalid values or
  // missing input paths.
  static RunConfig from_json(const nlohmann::json& doc);
};

// Reads the optional config file, applies overrides, then the --seed / --out
// shortcuts, and validates.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                          const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed,
                          std::optional<std::filesystem::path> out);

// Per-phase seeds derived from the master seed.
struct PhaseSeeds {
  std::uint64_t data, split, init, finetune, swag;
  std::uint64_t draws_round1, draws_round2, draws_round3, release;
  std::uint64_t nonprivate, dpsgd;

  static PhaseSeeds derive(std::uint64_t master);
  nlohmann::json to_json() const;
};

struct PreparedData {
  LabeledDataset dataset;
  std::vector<Record> train;
  std::vector<Record> test;
  std::vector<std::size_t> class_sizes;  // whole dataset, per label
  ModelSpec spec;
  ParameterVector base;  // shared starting point of every model
};

PreparedData prepare_data(const RunConfig& config, const PhaseSeeds& seeds);

struct SwagRound {
  ParameterVector finetuned;
  SwagMoments moments;
};

// Fine-tune from `base`, then constant-rate SGD absorbing one snapshot per
// epoch. Checkpoint and moments are written under `dir` when non-empty.
SwagRound run_swag_round(const RunConfig& config, const PhaseSeeds& seeds,
                         const PreparedData& data, const RecordWeights* weights,
                         const std::filesystem::path& dir);

struct PrivateRelease {
  ParameterVector theta;
  SensitivityReport report;
  RiskWeights weights;  // weights the final round trained with
  SwagMoments moments;  // final round
};

struct SwagPpmOutcome {
  RiskWeights initial_weights;
  SwagMoments round1;
  PrivateRelease ppm;
  std::optional<PrivateRelease> reweighted;
};

// Rounds 1 and 2 (and 3 when `reweight_round`). Internal artifacts go to
// <dir>/internal, each released model alone to <dir>/release or
// <dir>/release-reweighted. Throws PhaseError naming the failing phase.
SwagPpmOutcome run_swag_ppm(const RunConfig& config, const PhaseSeeds& seeds,
                            const PreparedData& data, bool reweight_round,
                            const std::filesystem::path& dir);

// Round 3: reweight(k) of the round-2 weights, retrain from base, measure and
// release under <dir>/release-reweighted.
PrivateRelease run_reweighted_round(const RunConfig& config, const PhaseSeeds& seeds,
                                    const PreparedData& data, const PrivateRelease& ppm,
                                    const std::filesystem::path& dir);

ParameterVector train_nonprivate(const RunConfig& config, const PhaseSeeds& seeds,
                                 const PreparedData& data);

struct DpSgdOutcome {
  ParameterVector theta;
  double noise_multiplier = 0.0;
  double sampling_rate = 0.0;
  std::int64_t steps = 0;
  DpBudget budget;
};

DpSgdOutcome train_dpsgd(const RunConfig& config, const PhaseSeeds& seeds,
                         const PreparedData& data, double delta);

struct ModelRow {
  std::string name;
  std::string epsilon;  // "-" when not private
  std::string delta;
  double f1_weighted = 0.0;
  double f1_macro = 0.0;
  std::vector<double> f1_per_class;
  QuartileReport quartiles;
  double seconds = 0.0;
  std::string error;  // nonempty when the model failed

  bool ok() const { return error.empty(); }
};

struct SweepRow {
  std::string method;
  std::string target_epsilon;
  std::string delta;
  double f1_weighted = 0.0;
  double f1_macro = 0.0;
  std::string error;
};

struct BenchmarkResult {
  std::vector<ModelRow> rows;  // non-private, SWAG-PPM, reweighted, DP-SGD
  std::vector<SweepRow> sweep;
  std::vector<std::string> class_names;
  std::vector<std::size_t> class_sizes;
  std::vector<std::size_t> test_sizes;
  std::vector<int> top_classes;
  std::vector<int> bottom_classes;
  double mean_alpha_top = 0.0;
  double mean_alpha_bottom = 0.0;
  double swag_ppm_epsilon = 0.0;
  double reweighted_epsilon = 0.0;
  double dpsgd_noise_multiplier = 0.0;

  const ModelRow* row(const std::string& name) const;
};

inline constexpr const char* kNonPrivate = "Non-Private";
inline constexpr const char* kSwagPpm = "SWAG-PPM";
inline constexpr const char* kSwagPpmReweighted = "SWAG-PPM (Reweighted)";
inline constexpr const char* kDpSgd = "DP-SGD";

// Trains all four models on one split and runs the delta sweep. Writes every
// artifact and report under config.output_dir.
BenchmarkResult run_benchmark(const RunConfig& config);

// Model comparison, per-class, quartile, delta-sweep and weight tables as CSV plus
// Markdown mirrors.
void write_benchmark_reports(const BenchmarkResult& result,
                             const std::filesystem::path& dir);

nlohmann::json benchmark_to_json(const BenchmarkResult& result);
// Throws FormatError.
BenchmarkResult benchmark_from_json(const nlohmann::json& j);

// Replay manifest: config, seeds, input hash and dataset summary.
nlohmann::json run_manifest(const RunConfig& config, const PhaseSeeds& seeds,
                            const PreparedData& data);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace swagppm

#endif  // SWAGPPM_PIPELINE_H_
