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

#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dcbf/fluid_value.hpp"
#include "dcbf/system_model.hpp"

namespace dcbf {

// Brute-force references for the analytic pieces of the controller.

struct PerEstimate {
  double p_hat = 0.0;
  double ci_low = 0.0;   // 95% Wilson interval
  double ci_high = 0.0;
  double ci_halfwidth = 0.0;
  long n = 0;
};

/// 95% Wilson score interval for `failures` out of `n`.
PerEstimate wilson_estimate(long failures, long n);

/// Conditional outage probability of flow k given hhat_k, by sampling
/// h = hhat_k - sqrt(eps) v. Requires n >= 1000.
PerEstimate mc_conditional_per(const Eigen::RowVectorXcd& hhat_k, const BeamSet& w, int k, const FlowParams& flow,
                               long n, Rng& rng);

// ---------------------------------------------------------------------------
// Discretized queue MDP.
//
// Queue k takes levels 0..L in steps of one packet (R_k units). Each slot the
// scheduler sees one of S frozen CSIT samples (uniform) and picks per-flow
// powers along zero-forcing directions of that sample. Service removes one
// packet on success, then Poisson packet arrivals join; arrivals beyond level
// L are dropped. The per-stage cost is sum_k p_k + gamma_k Q_k / lambda_k.

struct MdpOptions {
  int levels = 10;              // L
  int csit_samples = 50;        // S
  std::vector<double> powers;   // per-flow power grid; empty = 0 plus 8 log-spaced levels
  double power_min = 0.02;
  double power_max = 5.0;
  int power_levels = 8;
  int outage_draws = 256;       // frozen CSIT-error draws for success probabilities
};

class DiscretizedMdp {
 public:
  DiscretizedMdp(const SystemConfig& cfg, std::vector<FlowParams> flows, const MdpOptions& opts, Rng& rng);

  int K() const { return K_; }
  int levels() const { return L_; }
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int num_samples() const { return S_; }
  const std::vector<FlowParams>& flows() const { return flows_; }
  const std::vector<double>& powers() const { return powers_; }

  /// Queue levels (in packets) of a flat state index, and back.
  std::vector<int> state_levels(int state) const;
  int state_index(std::span<const int> levels) const;
  /// Queue state in normalized units (level * R_k).
  QueueState queue_state(int state) const;

  double stage_cost(int state, int action) const;
  double action_power(int action) const;
  /// Success probability of flow k under (sample, action).
  double success_prob(int sample, int action, int k) const;
  /// Distribution of the next level of flow k from level l, given success probability ps.
  std::vector<double> level_transition(int k, int level, double ps) const;
  /// Full next-state distribution (sums to 1).
  Eigen::VectorXd transition(int state, int sample, int action) const;
  /// Expected number of dropped packets per slot from a state under an action.
  double expected_drops(int state, int sample, int action) const;

 private:
  int K_;
  int L_;
  int S_;
  int num_states_;
  int num_actions_;
  std::vector<FlowParams> flows_;
  std::vector<double> powers_;
  std::vector<std::vector<double>> arrival_pmf_;  // per flow, packets 0..L
  std::vector<double> succ_;                      // [sample][action][k]
};

struct RviResult {
  double theta = 0.0;
  Eigen::VectorXd V;              // relative values, V(ref) = 0
  std::vector<int> policy;        // action per (state, sample), state-major
  int sweeps = 0;
  bool converged = false;
  double span = 0.0;
};

RviResult relative_value_iteration(const DiscretizedMdp& mdp, double tol = 1e-6, int max_sweeps = 20000,
                                   int ref_state = 0);

struct ValueComparison {
  double spearman = 0.0;
  double max_rel_deviation = 0.0;
  std::vector<double> norm_q;      // ||Q|| of each compared point
  std::vector<double> v_oracle;    // shifted to 0 at the reference state
  std::vector<double> v_approx;
  std::vector<std::vector<int>> levels;
};

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// Compare the oracle table with the fluid approximation on the interior grid
/// (every level strictly between 0 and L).
ValueComparison compare_value_functions(const DiscretizedMdp& mdp, const Eigen::VectorXd& V,
                                        const ApproxValue& approx);

void write_value_csv(const ValueComparison& cmp, std::ostream& os);

// ---------------------------------------------------------------------------
// Midpoint convexity probe for the per-flow Bernstein constraint
//   f = e_k - Tr M_k + sqrt(2 delta) x + delta y
// and for the cone constraints on (W, x, y).

struct ConvexityOptions {
  int K = 2;
  int Nt = 2;
  double eps = 0.1;
  double rate_R = 0.3;
  double tol = 1e-9;
  /// Draw delta from [-scale, scale] and use sign(delta) sqrt(2 |delta|).
  bool mirror_negative_delta = false;
};

struct ConvexityReport {
  long pairs = 0;
  long checks = 0;             // pairs * K
  long violations = 0;         // midpoint inequality failures
  long feasibility_violations = 0;  // midpoint of two cone-feasible points infeasible
  double max_violation = 0.0;
};

ConvexityReport convexity_probe(long n_pairs, Rng& rng, const ConvexityOptions& opts = {});

/// The probe's function at one point; exposed for tests.
double bernstein_constraint_value(const Eigen::RowVectorXcd& hhat_k, std::span<const Eigen::MatrixXcd> W, int k,
                                  double delta, double x, double y, double rate_R, double eps,
                                  bool mirror_negative_delta = false);

// ---------------------------------------------------------------------------
// Decoupled single-flow threshold policy: transmit only when the effective
// gain |h w|^2 exceeds a / (y R), with just enough power to carry R.

double decoupled_threshold_policy(const Eigen::RowVectorXcd& h_k, const Eigen::VectorXcd& direction, double y,
                                  const FlowParams& flow);

struct ThresholdStats {
  double mean_power = 0.0;
  double power_stderr = 0.0;
  double success = 0.0;
  double success_stderr = 0.0;
  double closed_power = 0.0;    // a E1(a / (y R))
  double closed_success = 0.0;  // exp(-a / (y R))
  long n = 0;
};

/// Simulate the policy over n i.i.d. CN(0, I) channels with a fixed unit direction.
ThresholdStats simulate_threshold_policy(double y, const FlowParams& flow, int Nt, long n, Rng& rng);

}  // namespace dcbf
