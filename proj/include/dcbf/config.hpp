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

#include <stdexcept>
#include <string>

#include "dcbf/harness.hpp"

namespace dcbf {

// Experiment configs are INI-style text:
//
//   [system]  K, Nt, tau, bw, packet_bits
//   [flows]   rate, lambda, gamma, eps     (one value, or K comma-separated)
//   [policy]  schemes, rho0, beta, total_power
//   [sweep]   horizon, warmup, seeds, axis, values, match_power,
//             pilot_horizon, pilot_seed, full_scale, record_timing
//
// system.K, system.Nt, flows.rate, flows.lambda, flows.gamma, flows.eps and
// policy.schemes are required; unknown keys are errors.

struct ConfigError : std::runtime_error {
  ConfigError(const std::string& msg, std::string key, int line);
  std::string key;  // "section.key", empty for syntax errors
  int line = 0;     // 1-based, 0 when unknown
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// "proposed", "capb", "fpb" or "rb" with the knob values from [policy].
PolicyKind make_scheme(const std::string& name, double rho0, double beta, double total_power);

}  // namespace dcbf
