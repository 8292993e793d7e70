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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "swagppm/blob_io.h"
#include "swagppm/errors.h"
#include "swagppm/rng.h"

namespace swagppm {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void log(const RunConfig& config, const std::string& message) {
  if (config.verbose) std::clog << "[swagppm] " << message << std::endl;
}

bool same_kind(const json& expected, const json& given) {
  if (expected.is_number()) return given.is_number();
  if (expected.is_boolean()) return given.is_boolean();
  if (expected.is_string()) return given.is_string();
  if (expected.is_array()) return given.is_array();
  if (expected.is_object()) return given.is_object();
  return expected.type() == given.type();
}

void overlay(json& target, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("'" + prefix + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!target.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    json& slot = target[key];
    if (!same_kind(slot, value)) {
      throw ConfigError("config key '" + path + "' expects " +
                        std::string(slot.type_name()) + ", got " + value.type_name());
    }
    if (slot.is_object()) {
      overlay(slot, value, path);
    } else {
      slot = value;
    }
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& section) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + section + "." + key + "': " + e.what());
  }
}

PhaseConfig parse_phase(const json& j, const std::string& section) {
  PhaseConfig p;
  try {
    p.optimizer = optimizer_from_string(get<std::string>(j, "optimizer", section));
  } catch (const InvalidArgument& e) {
    throw ConfigError(section + ": " + e.what());
  }
  if (p.optimizer == OptimizerKind::kDpSgd) {
    throw ConfigError(section + ": dp-sgd is configured in the dpsgd section");
  }
  p.learning_rate = get<double>(j, "learning_rate", section);
  p.batch_size = get<std::size_t>(j, "batch_size", section);
  p.epochs = get<int>(j, "epochs", section);
  p.weight_decay = get<double>(j, "weight_decay", section);
  if (!(p.learning_rate > 0.0)) throw ConfigError(section + ".learning_rate must be > 0");
  if (p.batch_size == 0) throw ConfigError(section + ".batch_size must be > 0");
  if (p.epochs < 0) throw ConfigError(section + ".epochs must be >= 0");
  if (!(p.weight_decay >= 0.0)) throw ConfigError(section + ".weight_decay must be >= 0");
  return p;
}

template <typename F>
auto phase(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const PhaseError&) {
    throw;
  } catch (const std::exception& e) {
    throw PhaseError(name, e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void save_release(const fs::path& dir, const ModelSpec& spec, const ParameterVector& theta,
                  const json& metadata) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  save_checkpoint(dir / "model.ckpt", Checkpoint{spec, theta, metadata});
}

ModelRow evaluate_row(const std::string& name, const PreparedData& data,
                      const ParameterVector& theta) {
  ModelRow row;
  row.name = name;
  const ConfusionTally tally = evaluate(data.spec, theta, data.test);
  row.f1_weighted = weighted_f1(tally);
  row.f1_macro = macro_f1(tally);
  row.f1_per_class = f1_per_class(tally);
  if (tally.num_classes() >= 4) row.quartiles = quartile_report(tally, data.class_sizes);
  return row;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_table(const fs::path& dir, const std::string& stem, const Table& t) {
  std::ofstream csv(dir / (stem + ".csv"));
  std::ofstream md(dir / (stem + ".md"));
  if (!csv || !md) throw FormatError("cannot write table " + stem + " under " + dir.string());
  auto csv_line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      csv << (i ? "," : "") << csv_escape(cells[i]);
    }
    csv << '\n';
  };
  auto md_line = [&](const std::vector<std::string>& cells) {
    md << '|';
    for (const auto& c : cells) md << ' ' << c << " |";
    md << '\n';
  };
  csv_line(t.header);
  md_line(t.header);
  md << '|';
  for (std::size_t i = 0; i < t.header.size(); ++i) md << " --- |";
  md << '\n';
  for (const auto& r : t.rows) {
    csv_line(r);
    md_line(r);
  }
}

std::string quartile_label(int label, const std::vector<int>& top,
                           const std::vector<int>& bottom) {
  if (std::find(top.begin(), top.end(), label) != top.end()) return "top";
  if (std::find(bottom.begin(), bottom.end(), label) != bottom.end()) return "bottom";
  return "middle";
}

json group_to_json(const GroupMetrics& g) {
  return {{"classes", g.classes}, {"f1_weighted", g.weighted_f1}, {"f1_macro", g.macro_f1}};
}

GroupMetrics group_from_json(const json& j) {
  GroupMetrics g;
  g.classes = j.at("classes").get<std::vector<int>>();
  g.weighted_f1 = j.at("f1_weighted").get<double>();
  g.macro_f1 = j.at("f1_macro").get<double>();
  return g;
}

}  // namespace

json default_run_config() {
  const SyntheticSpec s;
  return {
      {"schema_version", kRunConfigSchemaVersion},
      {"seed", 1},
      {"output_dir", "runs/default"},
      {"verbose", false},
      {"data",
       {{"source", "synthetic"},
        {"csv_path", ""},
        {"feature_dim", 2048},
        {"cap", 0},
        {"sampling_fraction", 1.0},
        {"train_fraction", 0.5},
        {"synthetic",
         {{"num_classes", s.num_classes},
          {"zipf_exponent", s.zipf_exponent},
          {"total_records", s.total_records},
          {"vocab_size", s.vocab_size},
          {"min_tokens", s.min_tokens},
          {"max_tokens", s.max_tokens},
          {"class_signal_strength", s.class_signal_strength}}}}},
      {"model", {{"family", "softmax-linear"}, {"hidden_dim", 0}}},
      {"finetune",
       {{"optimizer", "adaptive"},
        {"learning_rate", 0.01},
        {"batch_size", 16},
        {"epochs", 10},
        {"weight_decay", 0.0}}},
      {"swag",
       {{"optimizer", "sgd-constant"},
        {"learning_rate", 0.5},
        {"batch_size", 16},
        {"epochs", 20},
        {"weight_decay", 0.0},
        {"max_rank", kDefaultSwagRank},
        {"draws", 500}}},
      {"ppm", {{"c", 1.0}, {"g", 0.0}, {"k", 0.95}}},
      {"nonprivate",
       {{"schedule", "adaptive"},
        {"optimizer", "adaptive"},
        {"learning_rate", 0.01},
        {"batch_size", 16},
        {"epochs", 30},
        {"weight_decay", 0.0}}},
      {"dpsgd",
       {{"target_epsilon", 4.0},
        {"delta", 1e-4},
        {"clip_norm", 1.0},
        {"batch_size", 512},
        {"learning_rate", 16.0},
        {"epochs", 30},
        {"weight_decay", 0.0},
        {"delta_sweep", {1e-3, 1e-2, 0.1, 0.99}}}},
  };
}

json merge_run_config(const json& user) {
  json doc = default_run_config();
  overlay(doc, user, "");
  if (doc["schema_version"] != kRunConfigSchemaVersion) {
    throw ConfigError("unsupported schema_version " + doc["schema_version"].dump());
  }
  return doc;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("override key '" + key + "' is malformed");
    parts.push_back(part);
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  overlay(doc, patch, "");
}

TrainConfig PhaseConfig::train_config(std::uint64_t seed) const {
  TrainConfig c;
  c.optimizer = optimizer;
  c.learning_rate = learning_rate;
  c.batch_size = batch_size;
  c.epochs = epochs;
  c.weight_decay = weight_decay;
  c.seed = seed;
  return c;
}

RunConfig RunConfig::from_json(const json& input) {
  const json doc = merge_run_config(input);
  RunConfig c;
  c.document = doc;
  c.seed = get<std::uint64_t>(doc, "seed", "");
  c.output_dir = get<std::string>(doc, "output_dir", "");
  c.verbose = get<bool>(doc, "verbose", "");

  const json& d = doc["data"];
  c.source = get<std::string>(d, "source", "data");
  c.csv_path = get<std::string>(d, "csv_path", "data");
  c.feature_dim = get<std::size_t>(d, "feature_dim", "data");
  c.cap = get<std::size_t>(d, "cap", "data");
  c.sampling_fraction = get<double>(d, "sampling_fraction", "data");
  c.train_fraction = get<double>(d, "train_fraction", "data");
  if (c.source == "csv") {
    if (c.csv_path.empty() || !fs::exists(c.csv_path)) {
      throw ConfigError("data.csv_path '" + c.csv_path.string() + "' does not exist");
    }
  } else if (c.source != "synthetic") {
    throw ConfigError("data.source must be 'synthetic' or 'csv'");
  }
  if (c.feature_dim == 0 || (c.feature_dim & (c.feature_dim - 1)) != 0) {
    throw ConfigError("data.feature_dim must be a power of two");
  }
  if (c.cap == 1) throw ConfigError("data.cap must be 0 (off) or >= 2");
  if (!(c.sampling_fraction > 0.0 && c.sampling_fraction <= 1.0)) {
    throw ConfigError("data.sampling_fraction must lie in (0, 1]");
  }
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
    throw ConfigError("data.train_fraction must lie in (0, 1)");
  }
  const json& s = d["synthetic"];
  c.synthetic.num_classes = get<int>(s, "num_classes", "data.synthetic");
  c.synthetic.zipf_exponent = get<double>(s, "zipf_exponent", "data.synthetic");
  c.synthetic.total_records = get<std::size_t>(s, "total_records", "data.synthetic");
  c.synthetic.vocab_size = get<std::size_t>(s, "vocab_size", "data.synthetic");
  c.synthetic.min_tokens = get<std::size_t>(s, "min_tokens", "data.synthetic");
  c.synthetic.max_tokens = get<std::size_t>(s, "max_tokens", "data.synthetic");
  c.synthetic.class_signal_strength =
      get<double>(s, "class_signal_strength", "data.synthetic");
  c.synthetic.feature_dim = c.feature_dim;
  try {
    c.synthetic.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("data.synthetic: ") + e.what());
  }

  const json& m = doc["model"];
  try {
    c.family = model_family_from_string(get<std::string>(m, "family", "model"));
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("model.family: ") + e.what());
  }
  c.hidden_dim = get<std::size_t>(m, "hidden_dim", "model");
  if (c.family == ModelFamily::kMlpOneHidden && c.hidden_dim == 0) {
    throw ConfigError("model.hidden_dim must be > 0 for mlp-1-hidden");
  }
  if (c.family == ModelFamily::kSoftmaxLinear) c.hidden_dim = 0;

  c.finetune = parse_phase(doc["finetune"], "finetune");
  c.swag = parse_phase(doc["swag"], "swag");
  c.swag_rank = get<std::size_t>(doc["swag"], "max_rank", "swag");
  c.draws = get<std::size_t>(doc["swag"], "draws", "swag");
  if (c.swag_rank < 2) throw ConfigError("swag.max_rank must be >= 2");
  if (c.draws == 0) throw ConfigError("swag.draws must be >= 1");
  if (c.swag.epochs < 1) throw ConfigError("swag.epochs must be >= 1");

  const json& p = doc["ppm"];
  c.c = get<double>(p, "c", "ppm");
  c.g = get<double>(p, "g", "ppm");
  c.k = get<double>(p, "k", "ppm");
  if (!(c.c >= 0.0)) throw ConfigError("ppm.c must be >= 0");
  if (!std::isfinite(c.g)) throw ConfigError("ppm.g must be finite");
  if (!(c.k > 0.0 && c.k < 1.0)) throw ConfigError("ppm.k must lie in (0, 1)");

  const json& np = doc["nonprivate"];
  c.nonprivate_schedule = get<std::string>(np, "schedule", "nonprivate");
  if (c.nonprivate_schedule != "adaptive" && c.nonprivate_schedule != "finetune-swag") {
    throw ConfigError("nonprivate.schedule must be 'adaptive' or 'finetune-swag'");
  }
  json np_phase = np;
  np_phase.erase("schedule");
  c.nonprivate = parse_phase(np_phase, "nonprivate");

  const json& dp = doc["dpsgd"];
  c.dpsgd.target_epsilon = get<double>(dp, "target_epsilon", "dpsgd");
  c.dpsgd.delta = get<double>(dp, "delta", "dpsgd");
  c.dpsgd.clip_norm = get<double>(dp, "clip_norm", "dpsgd");
  c.dpsgd.batch_size = get<std::size_t>(dp, "batch_size", "dpsgd");
  c.dpsgd.learning_rate = get<double>(dp, "learning_rate", "dpsgd");
  c.dpsgd.epochs = get<int>(dp, "epochs", "dpsgd");
  c.dpsgd.weight_decay = get<double>(dp, "weight_decay", "dpsgd");
  c.dpsgd.delta_sweep = get<std::vector<double>>(dp, "delta_sweep", "dpsgd");
  if (!(c.dpsgd.target_epsilon > 0.0)) throw ConfigError("dpsgd.target_epsilon must be > 0");
  for (double delta : c.dpsgd.delta_sweep) {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("dpsgd.delta_sweep entries must lie in (0, 1)");
  }
  if (!(c.dpsgd.delta > 0.0 && c.dpsgd.delta < 1.0)) {
    throw ConfigError("dpsgd.delta must lie in (0, 1)");
  }
  if (!(c.dpsgd.clip_norm > 0.0) || std::isinf(c.dpsgd.clip_norm)) {
    throw ConfigError("dpsgd.clip_norm must be finite and > 0");
  }
  if (c.dpsgd.batch_size == 0) throw ConfigError("dpsgd.batch_size must be > 0");
  if (!(c.dpsgd.learning_rate > 0.0)) throw ConfigError("dpsgd.learning_rate must be > 0");
  if (c.dpsgd.epochs < 1) throw ConfigError("dpsgd.epochs must be >= 1");
  if (!(c.dpsgd.weight_decay >= 0.0)) throw ConfigError("dpsgd.weight_decay must be >= 0");
  return c;
}

RunConfig load_run_config(const std::optional<fs::path>& path,
                          const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed,
                          std::optional<fs::path> out) {
  json doc = default_run_config();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config file " + path->string());
    json user;
    try {
      user = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path->string() + " is not valid JSON: " + e.what());
    }
    doc = merge_run_config(user);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  if (out) doc["output_dir"] = out->string();
  return RunConfig::from_json(doc);
}

PhaseSeeds PhaseSeeds::derive(std::uint64_t master) {
  PhaseSeeds s{};
  s.data = derive_seed(master, "data");
  s.split = derive_seed(master, "split");
  s.init = derive_seed(master, "init");
  s.finetune = derive_seed(master, "finetune");
  s.swag = derive_seed(master, "swag");
  s.draws_round1 = derive_seed(master, "draws-round1");
  s.draws_round2 = derive_seed(master, "draws-round2");
  s.draws_round3 = derive_seed(master, "draws-round3");
  s.release = derive_seed(master, "release");
  s.nonprivate = derive_seed(master, "nonprivate");
  s.dpsgd = derive_seed(master, "dpsgd");
  return s;
}

json PhaseSeeds::to_json() const {
  return {{"data", data},
          {"split", split},
          {"init", init},
          {"finetune", finetune},
          {"swag", swag},
          {"draws_round1", draws_round1},
          {"draws_round2", draws_round2},
          {"draws_round3", draws_round3},
          {"release", release},
          {"nonprivate", nonprivate},
          {"dpsgd", dpsgd}};
}

PreparedData prepare_data(const RunConfig& config, const PhaseSeeds& seeds) {
  return phase("data", [&] {
    PreparedData out;
    LabeledDataset ds;
    if (config.source == "csv") {
      ds = read_csv_dataset(config.csv_path, config.feature_dim);
    } else {
      SyntheticSpec spec = config.synthetic;
      spec.seed = seeds.data;
      spec.feature_dim = config.feature_dim;
      ds = generate(spec);
    }
    if (config.cap > 0) {
      ds = stratified_cap_sample(ds, config.cap, config.sampling_fraction,
                                 derive_seed(seeds.data, "cap"));
    }
    if (ds.num_classes() < 2) throw InvalidArgument("need at least two classes");
    out.dataset = stratified_split(ds, config.train_fraction, seeds.split);
    out.train = out.dataset.view(SplitTag::kTrain);
    out.test = out.dataset.view(SplitTag::kTest);
    out.class_sizes = out.dataset.class_counts();
    out.spec.family = config.family;
    out.spec.input_dim = config.feature_dim;
    out.spec.hidden_dim = config.hidden_dim;
    out.spec.num_classes = static_cast<int>(out.dataset.num_classes());
    out.spec.validate();
    out.base = initialize_parameters(out.spec, seeds.init);
    return out;
  });
}

SwagRound run_swag_round(const RunConfig& config, const PhaseSeeds& seeds,
                         const PreparedData& data, const RecordWeights* weights,
                         const fs::path& dir) {
  SwagRound round;
  round.finetuned = phase("fine-tune", [&] {
    return train(data.spec, data.base, data.train, weights,
                 config.finetune.train_config(seeds.finetune))
        .theta;
  });
  if (!dir.empty()) {
    fs::create_directories(dir);
    ModelSpec spec = data.spec;
    spec.weight_decay = config.finetune.weight_decay;
    save_checkpoint(dir / "finetune.ckpt", Checkpoint{spec, round.finetuned, {{"phase", "fine-tune"}}});
  }
  round.moments = SwagMoments(data.spec.layout(), config.swag_rank);
  phase("swag", [&] {
    TrainConfig tc = config.swag.train_config(seeds.swag);
    train(data.spec, round.finetuned, data.train, weights, tc,
          [&](const EpochSnapshot& s) { round.moments.absorb(s.theta); });
    return 0;
  });
  if (!dir.empty()) save_swag_moments(dir / "swag_moments.bin", round.moments);
  return round;
}

namespace {

// Draws from `moments`, the |ell| matrix and the resulting sensitivity.
SensitivityReport measure(const RunConfig& config, const PreparedData& data,
                          const SwagMoments& moments, std::uint64_t seed,
                          const RiskWeights& weights, const fs::path& dir) {
  return phase("sensitivity", [&] {
    const RiskResult rr = compute_risks(data.spec, moments, config.draws, seed, data.train);
    const SensitivityReport report = sensitivity(rr.abs_log_likelihood, weights.alphas);
    if (!dir.empty()) {
      save_log_likelihood_matrix(dir / "abs_log_likelihood.bin", rr.abs_log_likelihood);
      write_json(dir / "sensitivity.json", report.to_json());
    }
    return report;
  });
}

PrivateRelease release(const RunConfig& config, const PreparedData& data,
                       SwagMoments moments, std::uint64_t seed,
                       SensitivityReport report, RiskWeights weights,
                       const fs::path& release_dir, const std::string& method) {
  PrivateRelease r;
  r.theta = phase("release", [&] {
    ParameterVector theta = posterior_draw(moments, seed, 0);
    save_release(release_dir, data.spec, theta,
                 {{"method", method}, {"epsilon", report.epsilon}, {"draws", config.draws}});
    return theta;
  });
  r.report = std::move(report);
  r.weights = std::move(weights);
  r.moments = std::move(moments);
  return r;
}

}  // namespace

SwagPpmOutcome run_swag_ppm(const RunConfig& config, const PhaseSeeds& seeds,
                            const PreparedData& data, bool reweight_round,
                            const fs::path& dir) {
  const fs::path internal = dir.empty() ? fs::path() : dir / "internal";
  auto sub = [&](const char* name) { return internal.empty() ? fs::path() : internal / name; };
  SwagPpmOutcome out;

  log(config, "round 1");
  SwagRound r1 = run_swag_round(config, seeds, data, nullptr, sub("round1"));
  out.initial_weights = phase("risk-weights", [&] {
    const RiskResult rr =
        compute_risks(data.spec, r1.moments, config.draws, seeds.draws_round1, data.train);
    RiskWeights w = map_weights(rr.abs_log_likelihood.record_ids(), rr.risks, config.c, config.g);
    if (!internal.empty()) {
      save_log_likelihood_matrix(sub("round1") / "abs_log_likelihood.bin", rr.abs_log_likelihood);
      write_risk_weights_csv(sub("round1") / "weights.csv", w);
    }
    return w;
  });
  out.round1 = std::move(r1.moments);

  log(config, "round 2");
  const RecordWeights w2 = out.initial_weights.as_map();
  SwagRound r2 = run_swag_round(config, seeds, data, &w2, sub("round2"));
  SensitivityReport rep2 = measure(config, data, r2.moments, seeds.draws_round2,
                                   out.initial_weights, sub("round2"));
  out.ppm = release(config, data, std::move(r2.moments), seeds.release, std::move(rep2),
                    out.initial_weights, dir.empty() ? fs::path() : dir / "release", kSwagPpm);
  log(config, "round 2 epsilon " + format_double(out.ppm.report.epsilon));

  if (reweight_round) out.reweighted = run_reweighted_round(config, seeds, data, out.ppm, dir);
  return out;
}

PrivateRelease run_reweighted_round(const RunConfig& config, const PhaseSeeds& seeds,
                                    const PreparedData& data, const PrivateRelease& ppm,
                                    const fs::path& dir) {
  log(config, "round 3");
  const fs::path internal = dir.empty() ? fs::path() : dir / "internal" / "round3";
  RiskWeights rw = phase("reweight", [&] {
    RiskWeights w = reweight(ppm.weights, ppm.report, config.k);
    if (!internal.empty()) {
      fs::create_directories(internal);
      write_risk_weights_csv(internal / "weights.csv", w);
    }
    return w;
  });
  const RecordWeights w3 = rw.as_map();
  SwagRound r3 = run_swag_round(config, seeds, data, &w3, internal);
  SensitivityReport rep = measure(config, data, r3.moments, seeds.draws_round3, rw, internal);
  PrivateRelease out = release(config, data, std::move(r3.moments),
                               derive_seed(seeds.release, "reweighted"), std::move(rep),
                               std::move(rw),
                               dir.empty() ? fs::path() : dir / "release-reweighted",
                               kSwagPpmReweighted);
  log(config, "round 3 epsilon " + format_double(out.report.epsilon));
  return out;
}

ParameterVector train_nonprivate(const RunConfig& config, const PhaseSeeds& seeds,
                                 const PreparedData& data) {
  if (config.nonprivate_schedule == "finetune-swag") {
    return run_swag_round(config, seeds, data, nullptr, {}).moments.mean_vector();
  }
  return phase("non-private", [&] {
    return train(data.spec, data.base, data.train, nullptr,
                 config.nonprivate.train_config(seeds.nonprivate))
        .theta;
  });
}

DpSgdOutcome train_dpsgd(const RunConfig& config, const PhaseSeeds& seeds,
                         const PreparedData& data, double delta) {
  return phase("dp-sgd", [&] {
    DpSgdOutcome out;
    const std::size_t n = data.train.size();
    const std::size_t batch = std::min(config.dpsgd.batch_size, n);
    out.sampling_rate = static_cast<double>(batch) / static_cast<double>(n);
    out.steps = static_cast<std::int64_t>(config.dpsgd.epochs) *
                static_cast<std::int64_t>(dp_steps_per_epoch(n, batch));
    out.noise_multiplier =
        calibrate_noise(config.dpsgd.target_epsilon, delta, out.sampling_rate, out.steps);
    out.budget = to_dp(compose(out.sampling_rate, out.noise_multiplier, out.steps), delta);
    TrainConfig tc;
    tc.optimizer = OptimizerKind::kDpSgd;
    tc.learning_rate = config.dpsgd.learning_rate;
    tc.batch_size = batch;
    tc.epochs = config.dpsgd.epochs;
    tc.clip_norm = config.dpsgd.clip_norm;
    tc.noise_multiplier = out.noise_multiplier;
    tc.weight_decay = config.dpsgd.weight_decay;
    tc.seed = seeds.dpsgd;
    out.theta = train(data.spec, data.base, data.train, nullptr, tc).theta;
    return out;
  });
}

const ModelRow* BenchmarkResult::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

json run_manifest(const RunConfig& config, const PhaseSeeds& seeds,
                  const PreparedData& data) {
  return {{"config", config.document},
          {"master_seed", config.seed},
          {"seeds", seeds.to_json()},
          {"input_hash", data.dataset.content_hash()},
          {"dataset", dataset_manifest(data.dataset, seeds.split)},
          {"train_records", data.train.size()},
          {"test_records", data.test.size()},
          {"model", data.spec.to_json()}};
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

namespace {

template <typename F>
ModelRow timed_row(const std::string& name, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  ModelRow row;
  try {
    row = body();
  } catch (const std::exception& e) {
    row = ModelRow{};
    row.error = e.what();
    row.f1_weighted = row.f1_macro = std::numeric_limits<double>::quiet_NaN();
  }
  row.name = name;
  row.seconds = seconds_since(start);
  return row;
}

}  // namespace

BenchmarkResult run_benchmark(const RunConfig& config) {
  const PhaseSeeds seeds = PhaseSeeds::derive(config.seed);
  const PreparedData data = prepare_data(config, seeds);
  const fs::path out = config.output_dir;
  fs::create_directories(out);
  write_json(out / "manifest.json", run_manifest(config, seeds, data));

  BenchmarkResult result;
  result.class_names = data.dataset.class_names;
  result.class_sizes = data.class_sizes;
  result.test_sizes = data.dataset.class_counts(SplitTag::kTest);
  if (data.class_sizes.size() >= 4) {
    result.top_classes = top_quartile_classes(data.class_sizes);
    result.bottom_classes = bottom_quartile_classes(data.class_sizes);
  }

  log(config, "non-private");
  result.rows.push_back(timed_row(kNonPrivate, [&] {
    const ParameterVector theta = train_nonprivate(config, seeds, data);
    save_release(out / "nonprivate" / "release", data.spec, theta, {{"method", kNonPrivate}});
    ModelRow row = evaluate_row(kNonPrivate, data, theta);
    row.epsilon = "-";
    row.delta = "-";
    return row;
  }));

  std::optional<SwagPpmOutcome> ppm;
  result.rows.push_back(timed_row(kSwagPpm, [&] {
    ppm = run_swag_ppm(config, seeds, data, false, out / "swag-ppm");
    ModelRow row = evaluate_row(kSwagPpm, data, ppm->ppm.theta);
    row.epsilon = fixed(ppm->ppm.report.epsilon, 2);
    row.delta = "O(n^-1/2)";
    return row;
  }));
  result.rows.push_back(timed_row(kSwagPpmReweighted, [&] {
    if (!ppm) throw PhaseError("reweight", "SWAG-PPM rounds did not complete");
    ppm->reweighted = run_reweighted_round(config, seeds, data, ppm->ppm, out / "swag-ppm");
    ModelRow row = evaluate_row(kSwagPpmReweighted, data, ppm->reweighted->theta);
    row.epsilon = fixed(ppm->reweighted->report.epsilon, 2);
    row.delta = "O(n^-1/2)";
    return row;
  }));
  if (ppm) {
    result.swag_ppm_epsilon = ppm->ppm.report.epsilon;
    if (ppm->reweighted) result.reweighted_epsilon = ppm->reweighted->report.epsilon;
  }

  log(config, "dp-sgd");
  std::optional<DpSgdOutcome> dp;
  result.rows.push_back(timed_row(kDpSgd, [&] {
    dp = train_dpsgd(config, seeds, data, config.dpsgd.delta);
    save_release(out / "dp-sgd" / "release", data.spec, dp->theta,
                 {{"method", kDpSgd},
                  {"epsilon", dp->budget.epsilon},
                  {"delta", config.dpsgd.delta},
                  {"noise_multiplier", dp->noise_multiplier}});
    write_json(out / "dp-sgd" / "report" / "privacy.json",
               {{"target_epsilon", config.dpsgd.target_epsilon},
                {"epsilon", dp->budget.epsilon},
                {"delta", config.dpsgd.delta},
                {"optimal_order", dp->budget.optimal_order},
                {"noise_multiplier", dp->noise_multiplier},
                {"sampling_rate", dp->sampling_rate},
                {"steps", dp->steps}});
    ModelRow row = evaluate_row(kDpSgd, data, dp->theta);
    row.epsilon = format_double(config.dpsgd.target_epsilon);
    row.delta = format_double(config.dpsgd.delta);
    return row;
  }));
  if (dp) result.dpsgd_noise_multiplier = dp->noise_multiplier;

  for (double delta : config.dpsgd.delta_sweep) {
    log(config, "dp-sgd sweep delta " + format_double(delta));
    SweepRow s;
    s.method = kDpSgd;
    s.target_epsilon = format_double(config.dpsgd.target_epsilon);
    s.delta = format_double(delta);
    try {
      const ParameterVector theta =
          (dp && delta == config.dpsgd.delta) ? dp->theta
                                              : train_dpsgd(config, seeds, data, delta).theta;
      const ConfusionTally t = evaluate(data.spec, theta, data.test);
      s.f1_weighted = weighted_f1(t);
      s.f1_macro = macro_f1(t);
    } catch (const std::exception& e) {
      s.error = e.what();
      s.f1_weighted = s.f1_macro = std::numeric_limits<double>::quiet_NaN();
    }
    result.sweep.push_back(s);
  }
  if (const ModelRow* r = result.row(kSwagPpm)) {
    result.sweep.push_back({kSwagPpm, r->epsilon, r->delta, r->f1_weighted, r->f1_macro, r->error});
  }

  if (ppm && !result.top_classes.empty()) {
    double top_sum = 0.0, bottom_sum = 0.0;
    std::size_t top_n = 0, bottom_n = 0;
    const auto& w = ppm->initial_weights;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      const std::string q =
          quartile_label(data.train[i].label, result.top_classes, result.bottom_classes);
      if (q == "top") {
        top_sum += w.alphas[i];
        ++top_n;
      } else if (q == "bottom") {
        bottom_sum += w.alphas[i];
        ++bottom_n;
      }
    }
    result.mean_alpha_top = top_n ? top_sum / static_cast<double>(top_n) : 0.0;
    result.mean_alpha_bottom = bottom_n ? bottom_sum / static_cast<double>(bottom_n) : 0.0;

    Table by_class{{"record_id", "code", "class_size", "quartile", "alpha"}, {}};
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      const int label = data.train[i].label;
      by_class.rows.push_back({std::to_string(data.train[i].id), result.class_names[label],
                           std::to_string(data.class_sizes[label]),
                           quartile_label(label, result.top_classes, result.bottom_classes),
                           format_double(w.alphas[i])});
    }
    write_table(out, "weights_by_class", by_class);
  }

  write_benchmark_reports(result, out);
  return result;
}

json benchmark_to_json(const BenchmarkResult& r) {
  json rows = json::array();
  for (const auto& m : r.rows) {
    rows.push_back({{"name", m.name},
                    {"epsilon", m.epsilon},
                    {"delta", m.delta},
                    {"f1_weighted", m.ok() ? json(m.f1_weighted) : json(nullptr)},
                    {"f1_macro", m.ok() ? json(m.f1_macro) : json(nullptr)},
                    {"f1_per_class", m.f1_per_class},
                    {"quartiles",
                     {{"top", group_to_json(m.quartiles.top)},
                      {"bottom", group_to_json(m.quartiles.bottom)}}},
                    {"seconds", m.seconds},
                    {"error", m.error}});
  }
  json sweep = json::array();
  for (const auto& s : r.sweep) {
    sweep.push_back({{"method", s.method},
                     {"target_epsilon", s.target_epsilon},
                     {"delta", s.delta},
                     {"f1_weighted", s.error.empty() ? json(s.f1_weighted) : json(nullptr)},
                     {"f1_macro", s.error.empty() ? json(s.f1_macro) : json(nullptr)},
                     {"error", s.error}});
  }
  return {{"rows", rows},
          {"sweep", sweep},
          {"class_names", r.class_names},
          {"class_sizes", r.class_sizes},
          {"test_sizes", r.test_sizes},
          {"top_classes", r.top_classes},
          {"bottom_classes", r.bottom_classes},
          {"mean_alpha_top", r.mean_alpha_top},
          {"mean_alpha_bottom", r.mean_alpha_bottom},
          {"swag_ppm_epsilon", r.swag_ppm_epsilon},
          {"reweighted_epsilon", r.reweighted_epsilon},
          {"dpsgd_noise_multiplier", r.dpsgd_noise_multiplier}};
}

BenchmarkResult benchmark_from_json(const json& j) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto num = [&](const json& v) { return v.is_null() ? nan : v.get<double>(); };
  BenchmarkResult r;
  try {
    for (const auto& m : j.at("rows")) {
      ModelRow row;
      row.name = m.at("name");
      row.epsilon = m.at("epsilon");
      row.delta = m.at("delta");
      row.f1_weighted = num(m.at("f1_weighted"));
      row.f1_macro = num(m.at("f1_macro"));
      row.f1_per_class = m.at("f1_per_class").get<std::vector<double>>();
      row.quartiles.top = group_from_json(m.at("quartiles").at("top"));
      row.quartiles.bottom = group_from_json(m.at("quartiles").at("bottom"));
      row.seconds = m.at("seconds");
      row.error = m.at("error");
      r.rows.push_back(std::move(row));
    }
    for (const auto& s : j.at("sweep")) {
      r.sweep.push_back({s.at("method"), s.at("target_epsilon"), s.at("delta"),
                         num(s.at("f1_weighted")), num(s.at("f1_macro")), s.at("error")});
    }
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    r.class_sizes = j.at("class_sizes").get<std::vector<std::size_t>>();
    r.test_sizes = j.at("test_sizes").get<std::vector<std::size_t>>();
    r.top_classes = j.at("top_classes").get<std::vector<int>>();
    r.bottom_classes = j.at("bottom_classes").get<std::vector<int>>();
    r.mean_alpha_top = j.at("mean_alpha_top");
    r.mean_alpha_bottom = j.at("mean_alpha_bottom");
    r.swag_ppm_epsilon = j.at("swag_ppm_epsilon");
    r.reweighted_epsilon = j.at("reweighted_epsilon");
    r.dpsgd_noise_multiplier = j.at("dpsgd_noise_multiplier");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed benchmark summary: ") + e.what());
  }
  return r;
}

void write_benchmark_reports(const BenchmarkResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  write_json(dir / "summary.json", benchmark_to_json(r));

  Table comparison{{"model", "epsilon", "delta", "f1_weighted", "f1_macro"}, {}};
  for (const auto& m : r.rows) {
    comparison.rows.push_back({m.name, m.epsilon, m.delta, fixed(m.f1_weighted, 4), fixed(m.f1_macro, 4)});
  }
  write_table(dir, "model_comparison", comparison);

  auto per_class = [&](const char* name, std::size_t c) {
    const ModelRow* m = r.row(name);
    return (m && m->ok() && c < m->f1_per_class.size()) ? fixed(m->f1_per_class[c], 4)
                                                        : std::string("NA");
  };
  Table pc{{"code", "test_size", "f1_nonprivate", "f1_swagppm", "f1_dpsgd"}, {}};
  Table by_size{{"code", "class_size", "test_size", "f1_nonprivate", "f1_swagppm",
              "f1_swagppm_reweighted", "f1_dpsgd"},
             {}};
  std::vector<std::size_t> order(r.class_names.size());
  for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return r.class_sizes[a] > r.class_sizes[b];
  });
  for (std::size_t c : order) {
    pc.rows.push_back({r.class_names[c], std::to_string(r.test_sizes[c]),
                       per_class(kNonPrivate, c), per_class(kSwagPpm, c), per_class(kDpSgd, c)});
    by_size.rows.push_back({r.class_names[c], std::to_string(r.class_sizes[c]),
                         std::to_string(r.test_sizes[c]), per_class(kNonPrivate, c),
                         per_class(kSwagPpm, c), per_class(kSwagPpmReweighted, c),
                         per_class(kDpSgd, c)});
  }
  write_table(dir, "per_class", pc);
  write_table(dir, "class_size_f1", by_size);

  Table q{{"model", "quartile", "f1_weighted", "f1_macro"}, {}};
  for (const char* quart : {"Top", "Bottom"}) {
    for (const char* name : {kNonPrivate, kSwagPpm}) {
      const ModelRow* m = r.row(name);
      if (!m || !m->ok() || r.top_classes.empty()) continue;
      const GroupMetrics& g =
          std::string(quart) == "Top" ? m->quartiles.top : m->quartiles.bottom;
      q.rows.push_back({name, quart, fixed(g.weighted_f1, 4), fixed(g.macro_f1, 4)});
    }
  }
  write_table(dir, "quartiles", q);

  Table sw{{"method", "target_epsilon", "delta", "f1_weighted", "f1_macro"}, {}};
  for (const auto& s : r.sweep) {
    sw.rows.push_back({s.method, s.target_epsilon, s.delta, fixed(s.f1_weighted, 4),
                       fixed(s.f1_macro, 4)});
  }
  write_table(dir, "delta_sweep", sw);
}

}  // namespace swagppm
