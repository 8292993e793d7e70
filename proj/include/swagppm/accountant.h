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

// Renyi-DP accounting for DP-SGD: the subsampled Gaussian mechanism at
// integer orders, additive composition, conversion to (epsilon, delta)-DP and
// noise calibration.

#ifndef SWAGPPM_ACCOUNTANT_H_
#define SWAGPPM_ACCOUNTANT_H_

#include <cstdint>
#include <vector>

#include "json.hpp"

namespace swagppm {

std::vector<int> default_rdp_orders();  // 2, 3, ..., 64

struct RdpLedger {
  std::vector<int> orders = default_rdp_orders();
  std::vector<double> epsilons;  // accumulated RDP epsilon per order
  std::int64_t steps = 0;
  double sampling_rate = 0.0;
  double noise_multiplier = 1.0;

  nlohmann::json to_json() const;
  static RdpLedger from_json(const nlohmann::json& j);
};

struct DpBudget {
  double epsilon = 0.0;
  double delta = 0.0;
  int optimal_order = 0;
};

// (4/5) exp(-(sigma epsilon)^2 / 2).
double gaussian_delta_bound(double noise_multiplier, double epsilon);

// RDP epsilon at integer order alpha of one Poisson-subsampled Gaussian step:
//   1/(alpha-1) log sum_{k=0}^{alpha} C(alpha,k) (1-q)^{alpha-k} q^k
//                                      exp(k(k-1) / (2 sigma^2)),
// evaluated in log space. Throws InvalidArgument on bad arguments and
// std::overflow_error if the result is not finite.
double sgm_rdp(double q, double noise_multiplier, int order);

// A ledger for T steps at rate q and noise sigma over `orders`.
RdpLedger compose(double q, double noise_multiplier, std::int64_t steps,
                  std::vector<int> orders = default_rdp_orders());
// Re-composes an existing ledger's mechanism for `steps` steps.
RdpLedger compose(const RdpLedger& ledger, std::int64_t steps);

// epsilon = min over orders of eps_RDP(alpha) + log(1/delta) / (alpha - 1).
// Throws InvalidArgument unless 0 < delta < 1.
DpBudget to_dp(const RdpLedger& ledger, double delta);

struct NoiseBracket {
  double lower = 0.3;
  double upper = 100.0;
  double tolerance = 1e-3;
};

// Smallest sigma in the bracket (to within tolerance, rounded up) whose
// composed (epsilon, delta) meets target_epsilon. Returns the lower bracket
// endpoint when it already does (e.g. q = 0). Throws InvalidArgument when the
// target is unattainable inside the bracket.
double calibrate_noise(double target_epsilon, double delta, double q,
                       std::int64_t steps, const NoiseBracket& bracket = {},
                       const std::vector<int>& orders = default_rdp_orders());

}  // namespace swagppm

#endif  // SWAGPPM_ACCOUNTANT_H_
