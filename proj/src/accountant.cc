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

#include "swagppm/accountant.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "swagppm/blob_io.h"
#include "swagppm/errors.h"

namespace swagppm {
namespace {

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

std::vector<int> default_rdp_orders() {
  std::vector<int> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  return orders;
}

double gaussian_delta_bound(double noise_multiplier, double epsilon) {
  const double x = noise_multiplier * epsilon;
  return 0.8 * std::exp(-0.5 * x * x);
}

double sgm_rdp(double q, double noise_multiplier, int order) {
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("q must lie in [0, 1]");
  if (!(noise_multiplier > 0.0)) throw InvalidArgument("sigma must be > 0");
  if (order < 2) throw InvalidArgument("RDP order must be an integer >= 2");
  if (q == 0.0) return 0.0;
  const double inv_two_var = 1.0 / (2.0 * noise_multiplier * noise_multiplier);
  const double a = static_cast<double>(order);
  if (q == 1.0) {
    // Only the k = alpha term survives.
    return a * inv_two_var;
  }
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(order) + 1);
  for (int k = 0; k <= order; ++k) {
    const double kk = static_cast<double>(k);
    terms.push_back(log_binomial(order, k) + (a - kk) * log_1mq + kk * log_q +
                    kk * (kk - 1.0) * inv_two_var);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  const double result = (m + std::log(s)) / (a - 1.0);
  if (!std::isfinite(result)) {
    throw std::overflow_error("sampled Gaussian RDP overflowed at order " +
                              std::to_string(order));
  }
  return std::max(result, 0.0);
}

RdpLedger compose(double q, double noise_multiplier, std::int64_t steps,
                  std::vector<int> orders) {
  if (steps < 0) throw InvalidArgument("steps must be >= 0");
  if (orders.empty()) throw InvalidArgument("at least one RDP order is required");
  RdpLedger ledger;
  ledger.orders = std::move(orders);
  ledger.steps = steps;
  ledger.sampling_rate = q;
  ledger.noise_multiplier = noise_multiplier;
  ledger.epsilons.reserve(ledger.orders.size());
  for (int a : ledger.orders) {
    ledger.epsilons.push_back(static_cast<double>(steps) *
                              sgm_rdp(q, noise_multiplier, a));
  }
  return ledger;
}

RdpLedger compose(const RdpLedger& ledger, std::int64_t steps) {
  return compose(ledger.sampling_rate, ledger.noise_multiplier, steps, ledger.orders);
}

DpBudget to_dp(const RdpLedger& ledger, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  if (ledger.orders.size() != ledger.epsilons.size() || ledger.orders.empty()) {
    throw InvalidArgument("ledger orders and epsilons disagree");
  }
  DpBudget best{std::numeric_limits<double>::infinity(), delta, 0};
  const double log_inv_delta = -std::log(delta);
  for (std::size_t i = 0; i < ledger.orders.size(); ++i) {
    const double eps =
        ledger.epsilons[i] + log_inv_delta / static_cast<double>(ledger.orders[i] - 1);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.optimal_order = ledger.orders[i];
    }
  }
  return best;
}

double calibrate_noise(double target_epsilon, double delta, double q,
                       std::int64_t steps, const NoiseBracket& bracket,
                       const std::vector<int>& orders) {
  if (!(target_epsilon > 0.0)) throw InvalidArgument("target epsilon must be > 0");
  auto meets = [&](double sigma) {
    return to_dp(compose(q, sigma, steps, orders), delta).epsilon <= target_epsilon;
  };
  if (meets(bracket.lower)) return bracket.lower;
  if (!meets(bracket.upper)) {
    throw InvalidArgument("target epsilon " + format_double(target_epsilon) +
                          " unattainable for sigma in [" +
                          format_double(bracket.lower) + ", " +
                          format_double(bracket.upper) + "]");
  }
  double lo = bracket.lower;  // fails
  double hi = bracket.upper;  // meets
  while (hi - lo > bracket.tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (meets(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

nlohmann::json RdpLedger::to_json() const {
  return {{"orders", orders},
          {"epsilons", epsilons},
          {"steps", steps},
          {"sampling_rate", sampling_rate},
          {"noise_multiplier", noise_multiplier}};
}

RdpLedger RdpLedger::from_json(const nlohmann::json& j) {
  RdpLedger l;
  l.orders = j.at("orders").get<std::vector<int>>();
  l.epsilons = j.at("epsilons").get<std::vector<double>>();
  l.steps = j.at("steps").get<std::int64_t>();
  l.sampling_rate = j.at("sampling_rate").get<double>();
  l.noise_multiplier = j.at("noise_multiplier").get<double>();
  if (l.orders.size() != l.epsilons.size()) {
    throw FormatError("ledger orders and epsilons differ in length");
  }
  return l;
}

}  // namespace swagppm
