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

// Classification metrics: per-class F1, macro and support-weighted F1, and
// class-size quartile aggregates.

#ifndef SWAGPPM_EVAL_H_
#define SWAGPPM_EVAL_H_

#include <cstddef>
#include <span>
#include <vector>

#include "swagppm/model.h"

namespace swagppm {

struct ClassTally {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t support() const { return tp + fn; }
};

struct ConfusionTally {
  std::vector<ClassTally> classes;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t total_support() const;

  // Throws InvalidArgument on label/prediction outside [0, num_classes) or
  // length mismatch.
  static ConfusionTally from_predictions(std::span<const int> truth,
                                         std::span<const int> predicted,
                                         std::size_t num_classes);
};

// Zero when precision + recall is zero.
double f1_score(const ClassTally& t);
std::vector<double> f1_per_class(const ConfusionTally& tally);
// Mean over every class of the tally's inventory.
double macro_f1(const ConfusionTally& tally);
// Throws InvalidArgument when total support is zero.
double weighted_f1(const ConfusionTally& tally);

struct GroupMetrics {
  std::vector<int> classes;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
};

struct QuartileReport {
  GroupMetrics top;
  GroupMetrics bottom;
};

// Orders classes by size descending with ties broken by ascending label; the
// first floor(m/4) classes form the top group and the last floor(m/4) the
// bottom group. Throws InvalidArgument with fewer than four classes.
QuartileReport quartile_report(const ConfusionTally& tally,
                               std::span<const std::size_t> class_sizes);

// Class groups used by quartile_report.
std::vector<int> top_quartile_classes(std::span<const std::size_t> class_sizes);
std::vector<int> bottom_quartile_classes(std::span<const std::size_t> class_sizes);

// Metrics restricted to `classes`.
GroupMetrics group_metrics(const ConfusionTally& tally, std::span<const int> classes);

// Predictions for each record under theta.
std::vector<int> predict_all(const ModelSpec& spec, const ParameterVector& theta,
                             std::span<const Record> records);
ConfusionTally evaluate(const ModelSpec& spec, const ParameterVector& theta,
                        std::span<const Record> records);

}  // namespace swagppm

#endif  // SWAGPPM_EVAL_H_
