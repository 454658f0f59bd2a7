// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dcbf/oracles.hpp"
#include "dcbf/system_model.hpp"

namespace dcbf {

// Self-check suites shared by the command-line tool and the acceptance tests.

/// Random flow: R in [0.2, 1], lambda / R in [0.2, 0.8], gamma in [0.5, 5].
FlowParams random_stable_flow(Rng& rng);

struct ValueSuiteReport {
  std::vector<FlowParams> flows;
  double max_ode_residual = 0.0;   // over a 100-point log grid of y in [y0, 1e3 y0]
  double min_asymptotic_ratio = 0.0;  // J(q) 2 lambda (R - lambda) / (gamma q^2) at q = 1e3
  double max_asymptotic_ratio = 0.0;
  double eps_low = 0.0;
  double eps_high = 0.0;
  ValueComparison low;
  ValueComparison high;
  RviResult rvi_low;
  RviResult rvi_high;
};

ValueSuiteReport run_value_suite(int n_flows, std::uint64_t seed, double eps_low = 0.01, double eps_high = 0.4);

void write_value_summary(const ValueSuiteReport& rep, std::ostream& os);

struct BernsteinInstance {
  int K = 0;
  int Nt = 0;
  double eps = 0.0;
  double delta = 0.0;
  double target_success = 0.0;  // 1 - e^-delta
  double mc_success = 0.0;
  double sigma = 0.0;           // binomial standard error at the target
  bool violated = false;        // mc_success < target - 3 sigma
};

struct BernsteinSuiteReport {
  std::vector<BernsteinInstance> instances;
  int violations = 0;
  double worst_z = 0.0;  // min (mc - target) / sigma
};

/// Random certified instances (rank-one beams scaled until the certificate
/// holds), each checked by Monte Carlo at `samples` draws.
BernsteinSuiteReport run_bernstein_suite(int instances, long samples, std::uint64_t seed);

void write_bernstein_summary(const BernsteinSuiteReport& rep, std::ostream& os);

}  // namespace dcbf
