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

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcbf/controller.hpp"
#include "dcbf/system_model.hpp"

namespace dcbf {

enum class SweepAxis { None, Gamma, Lambda, K, Power };

std::string to_string(SweepAxis axis);

struct ExperimentConfig {
  SystemConfig cfg;
  std::vector<FlowParams> flows;
  std::vector<PolicyKind> schemes;
  long horizon = 20000;
  long warmup = 1000;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  SweepAxis axis = SweepAxis::None;
  std::vector<double> axis_values;
  // Calibrate every scheme's knob to a common average power before the runs.
  bool match_power = false;
  long pilot_horizon = 2000;
  std::uint64_t pilot_seed = 1000003;
  double match_tol = 0.02;
  // Measure wall-clock time per decision (makes outputs run-dependent).
  bool record_timing = false;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct TrialMetrics {
  double avg_power = 0.0;            // time-average sum_k ||w_k||^2
  Eigen::VectorXd avg_queue;         // normalized units, per flow
  Eigen::VectorXd avg_queue_bits;
  Eigen::VectorXd avg_queue_pcks;
  Eigen::VectorXd avg_delay_slots;   // avg_queue / lambda
  Eigen::VectorXd attempts;          // slots with a nonzero beam
  Eigen::VectorXd failures;          // scheduled slots in outage
  Eigen::VectorXd target_sum;        // sum of rho_k over scheduled slots
  double decision_time = 0.0;        // mean seconds per decision taken
  long slots = 0;                    // accumulated (post-warmup) slots
  long failed_decisions = 0;
  long degraded_decisions = 0;

  Eigen::VectorXd per_rate() const;      // failures / attempts (0 when never scheduled)
  Eigen::VectorXd mean_target() const;   // target_sum / attempts
  double aggregate_per() const;
  double aggregate_target() const;
  double mean_delay_slots() const;
  double mean_delay_pcks() const;
};

/// Calibrated knob for the matched-power comparison, applied on top of the config.
struct SchemeKnob {
  PolicyKind policy;
  double gamma_scale = 1.0;  // multiplies every flow's gamma (queue-aware policy)
};

/// One closed-loop run. Throws only on invalid input; per-slot policy
/// failures are counted and the slot transmits nothing.
TrialMetrics run_trial(const ExperimentConfig& ec, const SchemeKnob& knob, std::uint64_t seed,
                       std::optional<std::chrono::steady_clock::time_point> deadline = std::nullopt);
TrialMetrics run_trial(const ExperimentConfig& ec, std::uint64_t seed);

/// Raised by run_trial when the deadline passes mid-run.
struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kCsvVersion = 1;

struct CsvRow {
  std::string scheme;
  int K = 0;
  int Nt = 0;
  double eps = 0.0;
  double gamma_or_beta = 0.0;  // gamma, beta, rho0 or total power by scheme
  double lambda = 0.0;
  double axis_value = 0.0;
  double avg_power = 0.0;
  double avg_delay_slots = 0.0;
  double avg_delay_pcks = 0.0;
  double per_rate = 0.0;
  double per_target = 0.0;
  std::optional<double> decision_ms;
  long failed_decisions = 0;
  std::uint64_t seed = 0;
};

void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const CsvRow& row);

/// The config with one axis value applied. The K axis raises Nt to K when needed.
ExperimentConfig apply_axis(const ExperimentConfig& ec, double value);

/// Knob value reported in the gamma_or_beta column.
double knob_value(const ExperimentConfig& ec, const SchemeKnob& knob);

struct Calibration {
  SchemeKnob knob;
  double target_power = 0.0;
  double pilot_power = 0.0;
  bool matched = false;  // pilot within the tolerance
};

/// Average power of the fixed-PER scheme on the pilot (the matched-power anchor).
double anchor_power(const ExperimentConfig& ec);

/// Bisect the scheme's knob so the pilot average power hits target.
Calibration calibrate_power(const ExperimentConfig& ec, const PolicyKind& scheme, double target_power,
                            std::optional<std::chrono::steady_clock::time_point> deadline = std::nullopt);

struct SweepResult {
  std::vector<CsvRow> rows;
  std::vector<Calibration> calibrations;  // per (point, scheme), when matching
  std::vector<std::string> errors;
  bool budget_exceeded = false;
};

struct SweepOptions {
  int workers = 0;  // 0: DCBF_WORKERS or hardware concurrency
  std::optional<std::chrono::steady_clock::time_point> deadline;
  /// Called from the writer thread for every finished row, in final order.
  std::function<void(const CsvRow&)> on_row;
};

/// Rows for every (axis point, scheme, seed) in that order. Trials run on a
/// worker pool; failed trials are reported in errors and skipped.
SweepResult run_sweep(const ExperimentConfig& ec, const SweepOptions& opts = {});

int worker_count_from_env();

struct BenchRow {
  int K = 0;
  std::string scheme;
  double mean_ms = 0.0;
  double max_ms = 0.0;
  int states = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  int oracle_K = 0;
  double oracle_seconds = 0.0;  // discretized value iteration, build plus solve; 0 if skipped

  /// Mean time of scheme a over scheme b at K, or NaN if absent.
  double ratio(int K, const std::string& a, const std::string& b) const;
  const BenchRow* find(int K, const std::string& scheme) const;
};

/// Mean decision time over `states` random (hhat, Q) pairs per (K, scheme),
/// with max(Nt, K) antennas.
/// The value-iteration oracle is timed at the smallest K when it is at most 2.
BenchReport bench_decision_time(const std::vector<int>& Ks, int Nt, const std::vector<PolicyKind>& schemes,
                                const FlowParams& flow, int states, std::uint64_t seed, bool time_oracle = true);

void write_bench(const BenchReport& rep, std::ostream& os);

/// 64-bit FNV-1a of a byte string (config fingerprint in manifests).
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace dcbf
