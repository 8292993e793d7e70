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

#include "swagppm/eval.h"

#include <algorithm>
#include <numeric>
#include <string>

#include "swagppm/errors.h"

namespace swagppm {

std::size_t ConfusionTally::total_support() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.support();
  return n;
}

ConfusionTally ConfusionTally::from_predictions(std::span<const int> truth,
                                                std::span<const int> predicted,
                                                std::size_t num_classes) {
  if (truth.size() != predicted.size()) {
    throw InvalidArgument("truth and prediction lengths differ");
  }
  ConfusionTally t;
  t.classes.resize(num_classes);
  const auto in_range = [&](int c) {
    return c >= 0 && static_cast<std::size_t>(c) < num_classes;
  };
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!in_range(truth[i]) || !in_range(predicted[i])) {
      throw InvalidArgument("class index out of range at position " + std::to_string(i));
    }
    if (truth[i] == predicted[i]) {
      ++t.classes[truth[i]].tp;
    } else {
      ++t.classes[truth[i]].fn;
      ++t.classes[predicted[i]].fp;
    }
  }
  return t;
}

double f1_score(const ClassTally& t) {
  const double tp = static_cast<double>(t.tp);
  const double pd = tp + static_cast<double>(t.fp);
  const double ad = tp + static_cast<double>(t.fn);
  const double precision = pd > 0.0 ? tp / pd : 0.0;
  const double recall = ad > 0.0 ? tp / ad : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::vector<double> f1_per_class(const ConfusionTally& tally) {
  std::vector<double> f(tally.num_classes());
  for (std::size_t c = 0; c < f.size(); ++c) f[c] = f1_score(tally.classes[c]);
  return f;
}

double macro_f1(const ConfusionTally& tally) {
  if (tally.num_classes() == 0) return 0.0;
  const auto f = f1_per_class(tally);
  return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
}

double weighted_f1(const ConfusionTally& tally) {
  const std::size_t total = tally.total_support();
  if (total == 0) throw InvalidArgument("weighted F1 needs nonzero support");
  double s = 0.0;
  for (const auto& c : tally.classes) {
    s += static_cast<double>(c.support()) * f1_score(c);
  }
  return s / static_cast<double>(total);
}

namespace {

std::vector<int> size_order(std::span<const std::size_t> sizes) {
  if (sizes.size() < 4) throw InvalidArgument("quartile analysis needs >= 4 classes");
  std::vector<int> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return sizes[a] > sizes[b]; });
  return order;
}

}  // namespace

std::vector<int> top_quartile_classes(std::span<const std::size_t> class_sizes) {
  auto order = size_order(class_sizes);
  order.resize(order.size() / 4);
  return order;
}

std::vector<int> bottom_quartile_classes(std::span<const std::size_t> class_sizes) {
  const auto order = size_order(class_sizes);
  return {order.end() - static_cast<long>(order.size() / 4), order.end()};
}

GroupMetrics group_metrics(const ConfusionTally& tally, std::span<const int> classes) {
  GroupMetrics g;
  g.classes.assign(classes.begin(), classes.end());
  double weighted = 0.0;
  double macro = 0.0;
  std::size_t support = 0;
  for (int c : classes) {
    const double f = f1_score(tally.classes.at(static_cast<std::size_t>(c)));
    macro += f;
    weighted += static_cast<double>(tally.classes[c].support()) * f;
    support += tally.classes[c].support();
  }
  g.macro_f1 = classes.empty() ? 0.0 : macro / static_cast<double>(classes.size());
  g.weighted_f1 = support > 0 ? weighted / static_cast<double>(support) : 0.0;
  return g;
}

QuartileReport quartile_report(const ConfusionTally& tally,
                               std::span<const std::size_t> class_sizes) {
  if (class_sizes.size() != tally.num_classes()) {
    throw InvalidArgument("class sizes and tally disagree on class count");
  }
  const auto top = top_quartile_classes(class_sizes);
  const auto bottom = bottom_quartile_classes(class_sizes);
  return {group_metrics(tally, top), group_metrics(tally, bottom)};
}

std::vector<int> predict_all(const ModelSpec& spec, const ParameterVector& theta,
                             std::span<const Record> records) {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(predict(spec, theta, r.features));
  return out;
}

ConfusionTally evaluate(const ModelSpec& spec, const ParameterVector& theta,
                        std::span<const Record> records) {
  std::vector<int> truth;
  truth.reserve(records.size());
  for (const auto& r : records) truth.push_back(r.label);
  const auto pred = predict_all(spec, theta, records);
  return ConfusionTally::from_predictions(truth, pred,
                                          static_cast<std::size_t>(spec.num_classes));
}

}  // namespace swagppm
