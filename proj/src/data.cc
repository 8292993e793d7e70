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

#include "swagppm/data.h"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "swagppm/errors.h"
#include "swagppm/rng.h"

namespace swagppm {
namespace {

// Members of each class, in dataset order.
std::vector<std::vector<std::size_t>> class_members(const LabeledDataset& d) {
  std::vector<std::vector<std::size_t>> members(d.num_classes());
  for (std::size_t i = 0; i < d.size(); ++i) {
    members[d.records[i].label].push_back(i);
  }
  return members;
}

uint64_t hash_u64(uint64_t h, uint64_t v) {
  for (int b = 0; b < 8; ++b) {
    h ^= (v >> (8 * b)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (const auto& r : records) ++counts[r.label];
  return counts;
}

std::vector<std::size_t> LabeledDataset::class_counts(SplitTag tag) const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (std::size_t i = 0; i < size(); ++i) {
    if (split[i] == tag) ++counts[records[i].label];
  }
  return counts;
}

std::vector<Record> LabeledDataset::view(SplitTag tag) const {
  std::vector<Record> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (split[i] == tag) out.push_back(records[i]);
  }
  return out;
}

std::uint64_t LabeledDataset::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& name : class_names) h = fnv1a64(name + '\x1f', h);
  for (const auto& r : records) {
    h = hash_u64(h, static_cast<uint64_t>(r.id));
    h = hash_u64(h, static_cast<uint64_t>(r.label));
    for (std::size_t k = 0; k < r.features.nnz(); ++k) {
      h = hash_u64(h, r.features.indices[k]);
      h = hash_u64(h, std::bit_cast<uint64_t>(r.features.values[k]));
    }
  }
  return h;
}

void LabeledDataset::validate() const {
  if (texts.size() != records.size() || split.size() != records.size()) {
    throw InvalidArgument("dataset columns have different lengths");
  }
  for (const auto& r : records) {
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= num_classes()) {
      throw InvalidArgument("record " + std::to_string(r.id) +
                            " has an out-of-range label");
    }
    r.features.validate();
  }
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw InvalidArgument("num-classes must be >= 2");
  if (!(zipf_exponent >= 0.0)) throw InvalidArgument("zipf-exponent must be >= 0");
  if (total_records < static_cast<std::size_t>(num_classes)) {
    throw InvalidArgument("total-records must be at least num-classes");
  }
  if (vocab_size < 2 * static_cast<std::size_t>(num_classes)) {
    throw InvalidArgument("vocab-size must be at least 2 * num-classes");
  }
  if (min_tokens == 0 || max_tokens < min_tokens) {
    throw InvalidArgument("tokens-per-record range is empty");
  }
  if (!(class_signal_strength >= 0.0 && class_signal_strength <= 1.0)) {
    throw InvalidArgument("class-signal-strength must lie in [0, 1]");
  }
  if (feature_dim == 0 || !std::has_single_bit(feature_dim)) {
    throw InvalidArgument("feature-dim must be a power of two");
  }
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"num_classes", num_classes},
          {"zipf_exponent", zipf_exponent},
          {"total_records", total_records},
          {"vocab_size", vocab_size},
          {"min_tokens", min_tokens},
          {"max_tokens", max_tokens},
          {"class_signal_strength", class_signal_strength},
          {"seed", seed},
          {"feature_dim", feature_dim}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.num_classes = j.value("num_classes", s.num_classes);
  s.zipf_exponent = j.value("zipf_exponent", s.zipf_exponent);
  s.total_records = j.value("total_records", s.total_records);
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.min_tokens = j.value("min_tokens", s.min_tokens);
  s.max_tokens = j.value("max_tokens", s.max_tokens);
  s.class_signal_strength = j.value("class_signal_strength", s.class_signal_strength);
  s.seed = j.value("seed", s.seed);
  s.feature_dim = j.value("feature_dim", s.feature_dim);
  return s;
}

LabeledDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const auto num_classes = static_cast<std::size_t>(spec.num_classes);

  // Zipf class sizes by largest remainder, then lift empty classes to one.
  std::vector<double> w(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    w[c] = std::pow(static_cast<double>(c + 1), -spec.zipf_exponent);
  }
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<std::size_t> sizes(num_classes);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double exact = static_cast<double>(spec.total_records) * w[c] / wsum;
    sizes[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += sizes[c];
    remainders.emplace_back(-(exact - std::floor(exact)), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < spec.total_records; ++i, ++assigned) {
    ++sizes[remainders[i % num_classes].second];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    while (sizes[c] == 0) {
      auto largest = std::max_element(sizes.begin(), sizes.end());
      --*largest;
      ++sizes[c];
    }
  }

  const std::size_t block = spec.vocab_size / (2 * num_classes);
  const std::size_t shared_begin = block * num_classes;
  const std::size_t shared_size = spec.vocab_size - shared_begin;

  Rng rng(derive_seed(spec.seed, "generate"));
  std::vector<int> labels;
  labels.reserve(spec.total_records);
  for (std::size_t c = 0; c < num_classes; ++c) {
    labels.insert(labels.end(), sizes[c], static_cast<int>(c));
  }
  std::shuffle(labels.begin(), labels.end(), rng);

  std::uniform_int_distribution<std::size_t> length(spec.min_tokens, spec.max_tokens);
  std::uniform_int_distribution<std::size_t> class_word(0, block - 1);
  std::uniform_int_distribution<std::size_t> shared_word(0, shared_size - 1);
  std::bernoulli_distribution from_class(spec.class_signal_strength);

  LabeledDataset d;
  for (std::size_t c = 0; c < num_classes; ++c) {
    d.class_names.push_back("c" + std::to_string(c));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t n_tokens = length(rng);
    std::string text;
    for (std::size_t t = 0; t < n_tokens; ++t) {
      const std::size_t word =
          from_class(rng)
              ? static_cast<std::size_t>(labels[i]) * block + class_word(rng)
              : shared_begin + shared_word(rng);
      if (t > 0) text += ' ';
      text += "w" + std::to_string(word);
    }
    Record r;
    r.id = static_cast<std::int64_t>(i);
    r.label = labels[i];
    r.features = hash_features(tokenize(text), spec.feature_dim);
    d.records.push_back(std::move(r));
    d.texts.push_back(std::move(text));
  }
  d.split.assign(d.size(), SplitTag::kNone);
  d.provenance = {{"kind", "synthetic"}, {"spec", spec.to_json()}};
  return d;
}

LabeledDataset stratified_cap_sample(const LabeledDataset& dataset,
                                     std::size_t cap, double sampling_fraction,
                                     std::uint64_t seed) {
  if (cap < 2) throw InvalidArgument("cap must be >= 2");
  if (!(sampling_fraction > 0.0 && sampling_fraction <= 1.0)) {
    throw InvalidArgument("sampling fraction must lie in (0, 1]");
  }
  const auto members = class_members(dataset);
  std::vector<std::size_t> keep;
  std::vector<int> new_label(dataset.num_classes(), -1);
  LabeledDataset out;
  for (std::size_t c = 0; c < members.size(); ++c) {
    const std::size_t n = members[c].size();
    const auto target = static_cast<std::size_t>(
        std::llround(sampling_fraction * static_cast<double>(n)));
    const std::size_t m = std::min({target, cap, n});
    if (m < 2) continue;
    std::vector<std::size_t> pool = members[c];
    Rng rng(derive_seed(seed, c));
    std::shuffle(pool.begin(), pool.end(), rng);
    keep.insert(keep.end(), pool.begin(), pool.begin() + static_cast<long>(m));
    new_label[c] = static_cast<int>(out.class_names.size());
    out.class_names.push_back(dataset.class_names[c]);
  }
  std::sort(keep.begin(), keep.end());
  for (std::size_t i : keep) {
    Record r = dataset.records[i];
    r.label = new_label[r.label];
    out.records.push_back(std::move(r));
    out.texts.push_back(dataset.texts[i]);
  }
  out.split.assign(out.size(), SplitTag::kNone);
  out.provenance = dataset.provenance;
  out.provenance["cap_sample"] = {
      {"cap", cap}, {"fraction", sampling_fraction}, {"seed", seed}};
  if (out.records.empty()) {
    const std::string msg =
        "stratified_cap_sample: every class was left with fewer than two "
        "records; the result is empty";
    std::clog << "warning: " << msg << '\n';
    out.provenance["warnings"].push_back(msg);
  }
  return out;
}

LabeledDataset stratified_split(const LabeledDataset& dataset,
                                double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument("train fraction must lie in (0, 1)");
  }
  LabeledDataset out = dataset;
  out.split.assign(out.size(), SplitTag::kTest);
  const auto members = class_members(dataset);
  for (std::size_t c = 0; c < members.size(); ++c) {
    const std::size_t n = members[c].size();
    if (n == 0) continue;
    if (n < 2) {
      throw InvalidArgument("class '" + dataset.class_names[c] +
                            "' has fewer than two records; cannot split");
    }
    auto n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(n) + 0.5));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    std::vector<std::size_t> pool = members[c];
    Rng rng(derive_seed(seed, c));
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t k = 0; k < n_train; ++k) out.split[pool[k]] = SplitTag::kTrain;
  }
  out.provenance["split"] = {{"train_fraction", train_fraction}, {"seed", seed}};
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current += static_cast<char>(std::tolower(u));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

SparseVector hash_features_unnormalized(const std::vector<std::string>& tokens,
                                        std::size_t dim) {
  if (dim == 0 || !std::has_single_bit(dim)) {
    throw InvalidArgument("hash dimension must be a power of two");
  }
  std::map<std::uint32_t, double> acc;
  for (const auto& token : tokens) {
    const uint64_t h = fnv1a64(token);
    const auto index = static_cast<std::uint32_t>(h & (dim - 1));
    acc[index] += (h >> 63) ? -1.0 : 1.0;
  }
  SparseVector v;
  for (const auto& [index, value] : acc) {
    if (value == 0.0) continue;
    v.indices.push_back(index);
    v.values.push_back(value);
  }
  return v;
}

SparseVector hash_features(const std::vector<std::string>& tokens,
                           std::size_t dim) {
  SparseVector v = hash_features_unnormalized(tokens, dim);
  double sq = 0.0;
  for (double x : v.values) sq += x * x;
  if (sq > 0.0) {
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v.values) x *= inv;
  }
  return v;
}

double gini(const std::vector<std::size_t>& class_counts) {
  const double m = static_cast<double>(class_counts.size());
  double total = 0.0;
  for (auto n : class_counts) total += static_cast<double>(n);
  if (total == 0.0) throw InvalidArgument("gini of all-zero counts");
  // sum_i sum_j |n_i - n_j| = 2 sum_k (2k - m + 1) n_(k) over sorted counts.
  std::vector<std::size_t> sorted = class_counts;
  std::sort(sorted.begin(), sorted.end());
  double pairwise = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    pairwise += 2.0 * (2.0 * static_cast<double>(k) - m + 1.0) *
                static_cast<double>(sorted[k]);
  }
  const double mean = total / m;
  return pairwise / (2.0 * m * m * mean);
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (!field.empty()) throw FormatError("stray quote inside CSV field");
        quoted = true;
        field_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (field_started || !field.empty() || !row.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        field.clear();
        row.clear();
        field_started = false;
        break;
      default:
        field += ch;
        field_started = true;
    }
  }
  if (quoted) throw FormatError("unterminated quoted CSV field");
  if (field_started || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

LabeledDataset read_csv_dataset(const std::filesystem::path& path,
                                std::size_t feature_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0] != std::vector<std::string>{"id", "text", "label"}) {
    throw FormatError(path.string() + ": header must be exactly id,text,label");
  }
  std::map<std::string, int> label_index;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) {
      throw FormatError(path.string() + ": row " + std::to_string(i + 1) +
                        " does not have three fields");
    }
    label_index.emplace(rows[i][2], 0);
  }
  LabeledDataset d;
  for (auto& [name, index] : label_index) {
    index = static_cast<int>(d.class_names.size());
    d.class_names.push_back(name);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    Record r;
    try {
      std::size_t used = 0;
      r.id = std::stoll(rows[i][0], &used);
      if (used != rows[i][0].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": bad id '" + rows[i][0] + "'");
    }
    r.label = label_index.at(rows[i][2]);
    r.features = hash_features(tokenize(rows[i][1]), feature_dim);
    d.records.push_back(std::move(r));
    d.texts.push_back(rows[i][1]);
  }
  d.split.assign(d.size(), SplitTag::kNone);
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  d.provenance = {{"kind", "csv"}, {"path", path.string()}, {"hash", hex}};
  return d;
}

void write_csv_dataset(const std::filesystem::path& path,
                       const LabeledDataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "id,text,label\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << dataset.records[i].id << ',' << csv_escape(dataset.texts[i]) << ','
        << csv_escape(dataset.class_names[dataset.records[i].label]) << '\n';
  }
}

nlohmann::json dataset_manifest(const LabeledDataset& dataset,
                                std::uint64_t split_seed) {
  nlohmann::json counts = nlohmann::json::object();
  const auto all = dataset.class_counts();
  const auto train = dataset.class_counts(SplitTag::kTrain);
  const auto test = dataset.class_counts(SplitTag::kTest);
  for (std::size_t c = 0; c < dataset.num_classes(); ++c) {
    counts[dataset.class_names[c]] = {
        {"total", all[c]}, {"train", train[c]}, {"test", test[c]}};
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(dataset.content_hash()));
  nlohmann::json m = {{"provenance", dataset.provenance},
                      {"records", dataset.size()},
                      {"classes", dataset.num_classes()},
                      {"class_counts", counts},
                      {"content_hash", hex},
                      {"split_seed", split_seed}};
  if (!dataset.records.empty()) m["gini"] = gini(all);
  const bool has_train =
      std::any_of(train.begin(), train.end(), [](auto n) { return n > 0; });
  if (has_train) m["gini_train"] = gini(train);
  return m;
}

}  // namespace swagppm
