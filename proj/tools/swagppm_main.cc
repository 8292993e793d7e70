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

// swagppm: command-line front end for the SWAG-PPM pipeline and benchmark.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "swagppm/accountant.h"
#include "swagppm/blob_io.h"
#include "swagppm/errors.h"
#include "swagppm/eval.h"
#include "swagppm/pipeline.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace swagppm;

constexpr int kExitConfig = 2;
constexpr int kExitPhase = 3;

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "master seed");
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--override", args.overrides, "dotted.key=value (repeatable)");
  cmd->add_flag("-v,--verbose", args.verbose, "log phase progress to stderr");
}

RunConfig load(const CommonArgs& args) {
  std::vector<std::string> overrides = args.overrides;
  if (args.verbose) overrides.push_back("verbose=true");
  return load_run_config(args.config.empty() ? std::nullopt
                                             : std::optional<fs::path>(args.config),
                         overrides, args.seed,
                         args.out.empty() ? std::nullopt : std::optional<fs::path>(args.out));
}

json metrics_json(const ConfusionTally& tally, const std::vector<std::size_t>& sizes) {
  json j = {{"f1_weighted", weighted_f1(tally)},
            {"f1_macro", macro_f1(tally)},
            {"f1_per_class", f1_per_class(tally)}};
  if (tally.num_classes() >= 4) {
    const QuartileReport q = quartile_report(tally, sizes);
    j["quartiles"] = {{"top", {{"f1_weighted", q.top.weighted_f1}, {"f1_macro", q.top.macro_f1}}},
                      {"bottom",
                       {{"f1_weighted", q.bottom.weighted_f1}, {"f1_macro", q.bottom.macro_f1}}}};
  }
  return j;
}

void print_metrics(const std::string& name, const json& metrics, const std::string& privacy) {
  std::cout << name << ": f1_weighted=" << format_double(metrics["f1_weighted"].get<double>())
            << " f1_macro=" << format_double(metrics["f1_macro"].get<double>());
  if (!privacy.empty()) std::cout << ' ' << privacy;
  std::cout << '\n';
}

struct Context {
  RunConfig config;
  PhaseSeeds seeds;
  PreparedData data;
  fs::path out;
};

Context prepare(const CommonArgs& args) {
  Context c{load(args), {}, {}, {}};
  c.seeds = PhaseSeeds::derive(c.config.seed);
  c.data = prepare_data(c.config, c.seeds);
  c.out = c.config.output_dir;
  fs::create_directories(c.out);
  write_json(c.out / "manifest.json", run_manifest(c.config, c.seeds, c.data));
  return c;
}

int cmd_generate_data(const CommonArgs& args) {
  Context c = prepare(args);
  write_csv_dataset(c.out / "dataset.csv", c.data.dataset);
  std::ofstream split(c.out / "split.csv");
  split << "id,split\n";
  for (std::size_t i = 0; i < c.data.dataset.size(); ++i) {
    split << c.data.dataset.records[i].id << ','
          << (c.data.dataset.split[i] == SplitTag::kTrain ? "train" : "test") << '\n';
  }
  const json manifest = dataset_manifest(c.data.dataset, c.seeds.split);
  write_json(c.out / "dataset_manifest.json", manifest);
  std::cout << "records=" << c.data.dataset.size() << " classes=" << c.data.dataset.num_classes()
            << " train=" << c.data.train.size() << " test=" << c.data.test.size()
            << " gini=" << format_double(manifest["gini"].get<double>()) << '\n';
  return 0;
}

int cmd_train(const CommonArgs& args) {
  Context c = prepare(args);
  const ParameterVector theta = train_nonprivate(c.config, c.seeds, c.data);
  const fs::path dir = c.out / "nonprivate";
  fs::create_directories(dir / "release");
  save_checkpoint(dir / "release" / "model.ckpt", Checkpoint{c.data.spec, theta, {{"method", kNonPrivate}}});
  const json metrics = metrics_json(evaluate(c.data.spec, theta, c.data.test), c.data.class_sizes);
  write_json(dir / "report" / "metrics.json", metrics);
  print_metrics(kNonPrivate, metrics, "");
  return 0;
}

json privacy_json(const PrivateRelease& r) {
  return {{"epsilon", r.report.epsilon},
          {"delta_alpha_d", r.report.delta},
          {"draws", r.report.draw_count},
          {"argmax_record_id", r.report.argmax_record_id},
          {"argmax_draw", r.report.argmax_draw},
          {"mean_alpha", r.weights.mean_alpha()},
          {"stage", r.weights.stage.to_string()}};
}

int cmd_swag_ppm(const CommonArgs& args, bool reweighted) {
  Context c = prepare(args);
  const fs::path dir = c.out / (reweighted ? "swag-ppm-rw" : "swag-ppm");
  const SwagPpmOutcome outcome = run_swag_ppm(c.config, c.seeds, c.data, reweighted, dir);
  const PrivateRelease& r = reweighted ? *outcome.reweighted : outcome.ppm;
  const json metrics = metrics_json(evaluate(c.data.spec, r.theta, c.data.test), c.data.class_sizes);
  write_json(dir / "report" / "metrics.json", metrics);
  write_json(dir / "report" / "privacy.json", privacy_json(r));
  print_metrics(reweighted ? kSwagPpmReweighted : kSwagPpm, metrics,
                "epsilon=" + format_double(r.report.epsilon));
  return 0;
}

int cmd_dpsgd(const CommonArgs& args) {
  Context c = prepare(args);
  const DpSgdOutcome dp = train_dpsgd(c.config, c.seeds, c.data, c.config.dpsgd.delta);
  const fs::path dir = c.out / "dp-sgd";
  fs::create_directories(dir / "release");
  save_checkpoint(dir / "release" / "model.ckpt", Checkpoint{c.data.spec, dp.theta, {{"method", kDpSgd}}});
  const json metrics = metrics_json(evaluate(c.data.spec, dp.theta, c.data.test), c.data.class_sizes);
  write_json(dir / "report" / "metrics.json", metrics);
  write_json(dir / "report" / "privacy.json",
             {{"target_epsilon", c.config.dpsgd.target_epsilon},
              {"epsilon", dp.budget.epsilon},
              {"delta", c.config.dpsgd.delta},
              {"optimal_order", dp.budget.optimal_order},
              {"noise_multiplier", dp.noise_multiplier},
              {"sampling_rate", dp.sampling_rate},
              {"steps", dp.steps}});
  print_metrics(kDpSgd, metrics,
                "epsilon=" + format_double(dp.budget.epsilon) +
                    " delta=" + format_double(c.config.dpsgd.delta) +
                    " sigma=" + format_double(dp.noise_multiplier));
  return 0;
}

struct AccountArgs {
  std::optional<double> q;
  std::optional<std::int64_t> steps;
  std::optional<double> sigma;
  std::vector<double> deltas = {1e-10, 1e-8, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 0.99};
};

int cmd_account(const CommonArgs& args, const AccountArgs& a) {
  const RunConfig config = load(args);
  double q = 0.0;
  std::int64_t steps = 0;
  if (a.q && a.steps) {
    q = *a.q;
    steps = *a.steps;
  } else {
    const PreparedData data = prepare_data(config, PhaseSeeds::derive(config.seed));
    const std::size_t n = data.train.size();
    const std::size_t batch = std::min(config.dpsgd.batch_size, n);
    q = a.q.value_or(static_cast<double>(batch) / static_cast<double>(n));
    steps = a.steps.value_or(static_cast<std::int64_t>(config.dpsgd.epochs) *
                             static_cast<std::int64_t>(dp_steps_per_epoch(n, batch)));
  }
  double sigma = 0.0;
  try {
    sigma = a.sigma ? *a.sigma
                    : calibrate_noise(config.dpsgd.target_epsilon, config.dpsgd.delta, q, steps);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  const RdpLedger ledger = compose(q, sigma, steps);
  std::cout << "sampling_rate,noise_multiplier,steps,delta,epsilon,optimal_order\n";
  for (double delta : a.deltas) {
    const DpBudget b = to_dp(ledger, delta);
    std::cout << format_double(q) << ',' << format_double(sigma) << ',' << steps << ','
              << format_double(delta) << ',' << format_double(b.epsilon) << ','
              << b.optimal_order << '\n';
  }
  return 0;
}

void print_comparison(const fs::path& dir) {
  std::ifstream in(dir / "model_comparison.md");
  std::cout << in.rdbuf();
}

int cmd_benchmark(const CommonArgs& args) {
  const RunConfig config = load(args);
  const BenchmarkResult r = run_benchmark(config);
  print_comparison(config.output_dir);
  int failures = 0;
  for (const auto& row : r.rows) {
    if (!row.ok()) {
      std::cerr << row.name << " failed: " << row.error << '\n';
      ++failures;
    }
  }
  return failures ? kExitPhase : 0;
}

int cmd_report(const CommonArgs& args, const std::string& run) {
  const fs::path dir = run.empty() ? fs::path(load(args).output_dir) : fs::path(run);
  std::ifstream in(dir / "summary.json");
  if (!in) throw ConfigError("no summary.json under " + dir.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("summary.json: ") + e.what());
  }
  write_benchmark_reports(benchmark_from_json(j), dir);
  print_comparison(dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SWAG-PPM: private classifiers from SWAG posterior draws"};
  app.require_subcommand(1);

  CommonArgs common;
  AccountArgs account;
  std::string run_dir;

  auto* gen = app.add_subcommand("generate-data", "generate and split the dataset");
  auto* train_cmd = app.add_subcommand("train", "train the non-private model");
  auto* ppm = app.add_subcommand("swag-ppm", "run SWAG-PPM and release one draw");
  auto* ppm_rw = app.add_subcommand("swag-ppm-rw", "SWAG-PPM with a reweighting round");
  auto* dp = app.add_subcommand("dp-sgd", "train DP-SGD calibrated to the target epsilon");
  auto* acct = app.add_subcommand("account", "print the (epsilon, delta) frontier as CSV");
  auto* bench = app.add_subcommand("benchmark", "train all four models and write reports");
  auto* report = app.add_subcommand("report", "rewrite tables from a benchmark summary");
  for (auto* cmd : {gen, train_cmd, ppm, ppm_rw, dp, acct, bench, report}) add_common(cmd, common);
  acct->add_option("--sampling-rate", account.q, "Poisson rate q")->check(CLI::Range(0.0, 1.0));
  acct->add_option("--steps", account.steps, "number of steps T");
  acct->add_option("--noise-multiplier", account.sigma, "sigma; calibrated when omitted");
  acct->add_option("--deltas", account.deltas, "delta grid")->delimiter(',');
  report->add_option("--run", run_dir, "benchmark output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_generate_data(common);
    if (*train_cmd) return cmd_train(common);
    if (*ppm) return cmd_swag_ppm(common, false);
    if (*ppm_rw) return cmd_swag_ppm(common, true);
    if (*dp) return cmd_dpsgd(common);
    if (*acct) return cmd_account(common, account);
    if (*bench) return cmd_benchmark(common);
    if (*report) return cmd_report(common, run_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PhaseError& e) {
    std::cerr << e.what() << '\n';
    return kExitPhase;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPhase;
  }
  return kExitConfig;
}
