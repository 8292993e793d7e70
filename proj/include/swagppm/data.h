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

// Labeled datasets: synthetic imbalanced generation, CSV ingest, stratified
// capping and splitting, hashed bag-of-words features, class-imbalance gini.

#ifndef SWAGPPM_DATA_H_
#define SWAGPPM_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "swagppm/model.h"

namespace swagppm {

enum class SplitTag { kNone, kTrain, kTest };

// Records with parallel raw texts and split tags. Labels index class_names
// and are contiguous in [0, class_names.size()).
struct LabeledDataset {
  std::vector<Record> records;
  std::vector<std::string> texts;
  std::vector<SplitTag> split;
  std::vector<std::string> class_names;
  // {"kind": "synthetic"|"csv", ...}; may carry a "warnings" array.
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const { return records.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::vector<std::size_t> class_counts() const;
  // Counts restricted to records carrying `tag`.
  std::vector<std::size_t> class_counts(SplitTag tag) const;
  // Copies of the records carrying `tag`, in dataset order.
  std::vector<Record> view(SplitTag tag) const;
  // FNV-1a over ids, labels, features and class names.
  std::uint64_t content_hash() const;
  void validate() const;
};

struct SyntheticSpec {
  int num_classes = 20;
  double zipf_exponent = 1.2;
  std::size_t total_records = 4000;
  std::size_t vocab_size = 2000;
  std::size_t min_tokens = 8;
  std::size_t max_tokens = 16;
  // Probability that a token comes from the record's class vocabulary.
  double class_signal_strength = 0.35;
  std::uint64_t seed = 1;
  std::size_t feature_dim = 4096;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

// Class sizes follow n_c proportional to (c + 1)^-zipf_exponent, every class
// at least one record. Class c owns a disjoint vocabulary block; the remaining
// words form a shared pool.
LabeledDataset generate(const SyntheticSpec& spec);

// Per class: keep min(round(f * n_c), cap, n_c) records drawn without
// replacement, then drop classes left with fewer than two. Labels are compacted.
LabeledDataset stratified_cap_sample(const LabeledDataset& dataset,
                                     std::size_t cap, double sampling_fraction,
                                     std::uint64_t seed);

// Tags every record train or test. Per class the train share is
// round-half-up(train_fraction * n_c), clamped so both sides are nonempty.
// Throws InvalidArgument for a class with fewer than two records.
LabeledDataset stratified_split(const LabeledDataset& dataset,
                                double train_fraction, std::uint64_t seed);

// Lowercase ASCII, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

// Signed feature hashing with 64-bit FNV-1a. Index is the low log2(dim) bits,
// the sign is the top bit. dim must be a power of two.
SparseVector hash_features_unnormalized(const std::vector<std::string>& tokens,
                                        std::size_t dim);
// As above, then L2-normalized. Empty input yields the zero vector.
SparseVector hash_features(const std::vector<std::string>& tokens,
                           std::size_t dim);

// sum_i sum_j |n_i - n_j| / (2 m^2 mean). Throws InvalidArgument when every
// count is zero.
double gini(const std::vector<std::size_t>& class_counts);

// Reads `id,text,label` with a mandatory header row. Class names are the
// distinct labels in lexicographic order.
LabeledDataset read_csv_dataset(const std::filesystem::path& path,
                                std::size_t feature_dim);
void write_csv_dataset(const std::filesystem::path& path,
                       const LabeledDataset& dataset);

// Provenance, class counts, gini and split seed.
nlohmann::json dataset_manifest(const LabeledDataset& dataset,
                                std::uint64_t split_seed);

// Minimal RFC 4180 reader used by the ingest paths.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_escape(std::string_view field);

}  // namespace swagppm

#endif  // SWAGPPM_DATA_H_
