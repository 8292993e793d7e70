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
#include <fstream>
#include <sstream>

#include "swagppm/blob_io.h"
#include "swagppm/data.h"
#include "swagppm/errors.h"

namespace swagppm {

LogLikelihoodMatrix::LogLikelihoodMatrix(std::size_t draws,
                                         std::vector<std::int64_t> record_ids)
    : draws_(draws),
      record_ids_(std::move(record_ids)),
      values_(draws_ * record_ids_.size(), 0.0) {}

LogLikelihoodMatrix::LogLikelihoodMatrix(std::size_t draws,
                                         std::vector<std::int64_t> record_ids,
                                         std::vector<double> values)
    : draws_(draws), record_ids_(std::move(record_ids)), values_(std::move(values)) {
  if (values_.size() != draws_ * record_ids_.size()) {
    throw InvalidArgument("|ell| matrix has " + std::to_string(values_.size()) +
                          " values, expected " +
                          std::to_string(draws_ * record_ids_.size()));
  }
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidArgument("|ell| entries must be finite and nonnegative");
    }
  }
}

LogLikelihoodMatrix LogLikelihoodMatrix::prefix(std::size_t draws) const {
  if (draws > draws_) throw InvalidArgument("prefix longer than the matrix");
  std::vector<double> v(values_.begin(),
                        values_.begin() + static_cast<long>(draws * records()));
  return LogLikelihoodMatrix(draws, record_ids_, std::move(v));
}

std::vector<double> risks_from_matrix(const LogLikelihoodMatrix& m) {
  if (m.draws() == 0) throw InvalidArgument("risk needs at least one draw");
  std::vector<double> r(m.records(), 0.0);
  for (std::size_t s = 0; s < m.draws(); ++s) {
    for (std::size_t i = 0; i < m.records(); ++i) r[i] = std::max(r[i], m.at(s, i));
  }
  return r;
}

namespace {

std::vector<std::int64_t> ids_of(std::span<const Record> records) {
  std::vector<std::int64_t> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.id);
  return ids;
}

void fill_row(const ModelSpec& spec, const ParameterVector& theta,
              std::span<const Record> records, LogLikelihoodMatrix& m,
              std::size_t row) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    m.at(row, i) = std::abs(log_likelihood(spec, theta, records[i]));
  }
}

}  // namespace

RiskResult compute_risks(const ModelSpec& spec,
                         std::span<const ParameterVector> draws,
                         std::span<const Record> records) {
  if (draws.empty()) throw InvalidArgument("risk needs at least one draw");
  if (records.empty()) throw InvalidArgument("risk needs a nonempty dataset");
  RiskResult out;
  out.abs_log_likelihood = LogLikelihoodMatrix(draws.size(), ids_of(records));
  for (std::size_t s = 0; s < draws.size(); ++s) {
    fill_row(spec, draws[s], records, out.abs_log_likelihood, s);
  }
  out.risks = risks_from_matrix(out.abs_log_likelihood);
  return out;
}

RiskResult compute_risks(const ModelSpec& spec, const SwagMoments& moments,
                         std::size_t draw_count, std::uint64_t seed,
                         std::span<const Record> records) {
  if (draw_count == 0) throw InvalidArgument("risk needs at least one draw");
  if (records.empty()) throw InvalidArgument("risk needs a nonempty dataset");
  RiskResult out;
  out.abs_log_likelihood = LogLikelihoodMatrix(draw_count, ids_of(records));
  for_each_posterior_draw(moments, draw_count, seed,
                          [&](std::size_t s, const ParameterVector& theta) {
                            fill_row(spec, theta, records, out.abs_log_likelihood, s);
                          });
  out.risks = risks_from_matrix(out.abs_log_likelihood);
  return out;
}

std::string WeightStage::to_string() const {
  if (!reweighted) return "initial";
  return "reweighted(" + format_double(k) + ")";
}

WeightStage WeightStage::parse(const std::string& text) {
  if (text == "initial") return {};
  const std::string prefix = "reweighted(";
  if (text.rfind(prefix, 0) == 0 && text.size() > prefix.size() + 1 &&
      text.back() == ')') {
    const std::string k = text.substr(prefix.size(), text.size() - prefix.size() - 1);
    try {
      return {true, std::stod(k)};
    } catch (const std::exception&) {
    }
  }
  throw FormatError("unknown weight stage '" + text + "'");
}

RecordWeights RiskWeights::as_map() const {
  RecordWeights m;
  m.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) m.emplace(record_ids[i], alphas[i]);
  return m;
}

double RiskWeights::mean_alpha() const {
  if (alphas.empty()) return 0.0;
  double s = 0.0;
  for (double a : alphas) s += a;
  return s / static_cast<double>(alphas.size());
}

RiskWeights map_weights(std::span<const std::int64_t> record_ids,
                        std::span<const double> risks, double c, double g) {
  if (risks.size() < 2) throw InvalidArgument("weight mapping needs n >= 2");
  if (record_ids.size() != risks.size()) {
    throw InvalidArgument("record ids and risks differ in length");
  }
  if (!(c >= 0.0)) throw InvalidArgument("scale c must be >= 0");
  RiskWeights w;
  w.record_ids.assign(record_ids.begin(), record_ids.end());
  w.risks.assign(risks.begin(), risks.end());
  w.scale_c = c;
  w.shift_g = g;
  const auto [lo, hi] = std::minmax_element(risks.begin(), risks.end());
  const double range = *hi - *lo;
  w.normalized_risks.resize(risks.size());
  w.alphas.resize(risks.size());
  for (std::size_t i = 0; i < risks.size(); ++i) {
    w.normalized_risks[i] = range > 0.0 ? (risks[i] - *lo) / range : 0.0;
    w.alphas[i] = std::clamp(c * (1.0 - w.normalized_risks[i]) + g, 0.0, 1.0);
  }
  return w;
}

SensitivityReport sensitivity(const LogLikelihoodMatrix& abs_ll,
                              std::span<const double> alphas) {
  if (alphas.size() != abs_ll.records()) {
    throw InvalidArgument("weights and |ell| matrix disagree on record count");
  }
  SensitivityReport rep;
  rep.draw_count = abs_ll.draws();
  rep.record_ids = abs_ll.record_ids();
  rep.record_deltas.assign(abs_ll.records(), 0.0);
  std::vector<std::size_t> best_draw(abs_ll.records(), 0);
  for (std::size_t s = 0; s < abs_ll.draws(); ++s) {
    for (std::size_t i = 0; i < abs_ll.records(); ++i) {
      const double v = alphas[i] * abs_ll.at(s, i);
      if (v > rep.record_deltas[i]) {
        rep.record_deltas[i] = v;
        best_draw[i] = s;
      }
    }
  }
  for (std::size_t i = 0; i < abs_ll.records(); ++i) {
    if (i == 0 || rep.record_deltas[i] > rep.delta) {
      rep.delta = rep.record_deltas[i];
      rep.argmax_draw = best_draw[i];
      rep.argmax_record_id = rep.record_ids[i];
    }
  }
  rep.epsilon = 2.0 * rep.delta;
  return rep;
}

RiskWeights reweight(const RiskWeights& weights, const SensitivityReport& report,
                     double k) {
  if (!(k > 0.0 && k < 1.0)) throw InvalidArgument("k must lie in (0, 1)");
  if (report.record_ids != weights.record_ids) {
    throw InvalidArgument("sensitivity report and weights cover different records");
  }
  if (!(report.delta > 0.0)) {
    throw InvalidArgument("reweighting is undefined when the sensitivity is 0");
  }
  RiskWeights out = weights;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double di = report.record_deltas[i];
    out.alphas[i] = di > 0.0
                        ? std::clamp(k * weights.alphas[i] * report.delta / di, 0.0, 1.0)
                        : 1.0;
  }
  out.stage = {true, k};
  return out;
}

nlohmann::json SensitivityReport::to_json() const {
  return {{"delta", delta},
          {"epsilon", epsilon},
          {"draw_count", draw_count},
          {"argmax", {{"draw", argmax_draw}, {"record_id", argmax_record_id}}},
          {"record_ids", record_ids},
          {"record_deltas", record_deltas}};
}

SensitivityReport SensitivityReport::from_json(const nlohmann::json& j) {
  SensitivityReport r;
  r.delta = j.at("delta").get<double>();
  r.epsilon = j.at("epsilon").get<double>();
  r.draw_count = j.at("draw_count").get<std::size_t>();
  r.argmax_draw = j.at("argmax").at("draw").get<std::size_t>();
  r.argmax_record_id = j.at("argmax").at("record_id").get<std::int64_t>();
  r.record_ids = j.at("record_ids").get<std::vector<std::int64_t>>();
  r.record_deltas = j.at("record_deltas").get<std::vector<double>>();
  return r;
}

void write_risk_weights_csv(const std::filesystem::path& path, const RiskWeights& w) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "record_id,risk,normalized_risk,alpha,stage\n";
  const std::string stage = w.stage.to_string();
  for (std::size_t i = 0; i < w.size(); ++i) {
    out << w.record_ids[i] << ',' << format_double(w.risks[i]) << ','
        << format_double(w.normalized_risks[i]) << ',' << format_double(w.alphas[i])
        << ',' << stage << '\n';
  }
}

RiskWeights read_risk_weights_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const auto rows = parse_csv(buf.str());
  const std::vector<std::string> header = {"record_id", "risk", "normalized_risk",
                                           "alpha", "stage"};
  if (rows.empty() || rows[0] != header) {
    throw FormatError(path.string() + ": unexpected risk-weights header");
  }
  RiskWeights w;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 5) throw FormatError("risk-weights row with wrong arity");
    w.record_ids.push_back(std::stoll(rows[i][0]));
    w.risks.push_back(std::stod(rows[i][1]));
    w.normalized_risks.push_back(std::stod(rows[i][2]));
    w.alphas.push_back(std::stod(rows[i][3]));
    w.stage = WeightStage::parse(rows[i][4]);
  }
  return w;
}

void save_log_likelihood_matrix(const std::filesystem::path& path,
                                const LogLikelihoodMatrix& m) {
  nlohmann::json header = {{"kind", "abs_log_likelihood"},
                           {"draws", m.draws()},
                           {"record_ids", m.record_ids()}};
  write_blob(path, std::move(header), {m.values()});
}

LogLikelihoodMatrix load_log_likelihood_matrix(const std::filesystem::path& path) {
  Blob blob = read_blob(path);
  if (blob.header.value("kind", "") != "abs_log_likelihood") {
    throw FormatError(path.string() + " is not an |ell| matrix");
  }
  return LogLikelihoodMatrix(blob.header.at("draws").get<std::size_t>(),
                             blob.header.at("record_ids").get<std::vector<std::int64_t>>(),
                             std::move(blob.payload));
}

}  // namespace swagppm
