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

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dcbf/bernstein.hpp"
#include "dcbf/conic.hpp"
#include "dcbf/fluid_value.hpp"
#include "dcbf/system_model.hpp"

namespace dcbf {

// Policies.
struct Proposed {};
struct RandomBeam {
  double total_power = 1.0;
};
struct FixedPer {
  double rho0 = 0.1;
};
struct CsitAdaptivePer {
  double beta = 1.0;
};
using PolicyKind = std::variant<Proposed, RandomBeam, FixedPer, CsitAdaptivePer>;

std::string policy_name(const PolicyKind& kind);
void validate_policy(const PolicyKind& kind);

// ---------------------------------------------------------------------------
// Per-slot beamforming program.
//
// Variables per flow k: W_k as Nt^2 reals (diagonal, then Re/Im of the strict
// lower triangle), then the slacks x_k and y_k. For each flow:
//   Tr M_k(W) - sqrt(2 delta_k) x_k - delta_k y_k >= e_k(W)
//   ||(M_k(W), sqrt(2) z_k(W))|| <= x_k
//   y_k I + M_k(W) >= 0,  W_k >= 0,  y_k >= 0
// and the objective is sum_k Tr W_k. The PSD constraints use the native
// Hermitian cone.

class Step2Layout {
 public:
  Step2Layout(int K, int Nt) : K_(K), Nt_(Nt) {}
  int K() const { return K_; }
  int Nt() const { return Nt_; }
  int per_flow() const { return Nt_ * Nt_ + 2; }
  int num_vars() const { return K_ * per_flow(); }
  int w_offset(int k) const { return k * per_flow(); }
  int x_index(int k) const { return k * per_flow() + Nt_ * Nt_; }
  int y_index(int k) const { return x_index(k) + 1; }

  /// Hermitian basis element for W parameter t in [0, Nt^2).
  Eigen::MatrixXcd basis(int t) const;
  Eigen::MatrixXcd gram(const Eigen::VectorXd& vars, int k) const;
  /// Inverse of gram(): parameters of a Hermitian matrix.
  Eigen::VectorXd params(const Eigen::MatrixXcd& W) const;

 private:
  int K_;
  int Nt_;
};

struct Step2Program {
  ConicProblem problem;
  Step2Layout layout;
  std::vector<int> margin_row;  // row of each flow's Bernstein inequality
};

Step2Program build_step2_program(const CsitRealization& hhat, std::span<const double> delta,
                                 std::span<const FlowParams> flows, const SystemConfig& cfg);

/// The same program restricted to W_k = p_k u_k u_k^H for fixed unit
/// directions (columns of U). Variables per flow: p_k, x_k, y_k.
ConicProblem build_power_program(const CsitRealization& hhat, const Eigen::MatrixXcd& U,
                                 std::span<const double> delta, std::span<const FlowParams> flows,
                                 const SystemConfig& cfg);

/// Minimum-power certified powers along fixed directions, or nothing if the
/// program has no optimal point.
std::optional<Eigen::VectorXd> certified_powers(const CsitRealization& hhat, const Eigen::MatrixXcd& U,
                                                std::span<const double> delta, std::span<const FlowParams> flows,
                                                const SolverSettings& solver);

enum class SdrStatus { Converged, MaxIter, Infeasible, SolverFailure };
std::string to_string(SdrStatus s);

struct SdrSolution {
  std::vector<Eigen::MatrixXcd> Wset;
  Eigen::VectorXd delta;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd margin_dual;  // multiplier of each flow's Bernstein inequality
  std::vector<double> objective_trace;
  int iterations = 0;
  int conic_solves = 0;
  int backoffs = 0;
  SdrStatus status = SdrStatus::MaxIter;

  double total_trace() const;
};

/// Solve the program for fixed delta. Returns false when no optimal point was found.
struct Step2Result {
  SdrSolution sol;
  SolveStatus status = SolveStatus::MaxIter;
};
Step2Result solve_step2(const CsitRealization& hhat, std::span<const double> delta, std::span<const FlowParams> flows,
                        const SystemConfig& cfg, const SolverSettings& solver);

/// Per-flow margin Tr M_k(W) - e_k(W) of a Gram set.
Eigen::VectorXd bernstein_margins(const CsitRealization& hhat, std::span<const Eigen::MatrixXcd> W,
                                  std::span<const FlowParams> flows);

struct DeltaStep {
  Eigen::VectorXd delta;
  std::vector<bool> unguaranteed;  // delta_k = 0 because the margin was not positive
};

/// Largest delta per flow that keeps the Bernstein inequality valid at the
/// current (W, x, y): the exact maximizer of the delta subproblem with the
/// other blocks frozen.
DeltaStep solve_delta_step(const SdrSolution& state, const ValueGradient& gradient, const CsitRealization& hhat,
                           std::span<const FlowParams> flows);

/// Minimizer over [0, kDeltaCap] of mu (sqrt(2 d) x + d y) + weight e^-d.
double surrogate_delta(double mu, double x, double y, double weight);

enum class DeltaUpdate { Surrogate, Literal };

struct AlternatingOptions {
  double delta_init = 2.302585092994046;  // ln 10
  double rel_tol = 1e-5;
  int max_iter = 50;
  int max_backtracks = 8;
  DeltaUpdate update = DeltaUpdate::Surrogate;
  SolverSettings solver = default_solver();

  static SolverSettings default_solver();
};

/// Objective sum_k (Tr W_k - weight_k (1 - e^-delta_k)).
double sdr_objective(std::span<const Eigen::MatrixXcd> W, const Eigen::VectorXd& delta, const Eigen::VectorXd& weight);

/// Alternate the W-update and the delta-update from delta = delta_init.
/// weight_k multiplies the reliability reward (g_k R_k for the queue-aware
/// policy, a constant for the CSIT-only baseline).
SdrSolution alternating_solve(const CsitRealization& hhat, const Eigen::VectorXd& weight,
                              std::span<const FlowParams> flows, const SystemConfig& cfg,
                              const AlternatingOptions& opts = {});

/// Convenience overload: weights from the fluid value gradient at Q.
SdrSolution alternating_solve(const CsitRealization& hhat, const QueueState& Q, const ApproxValue& value,
                              std::span<const FlowParams> flows, const SystemConfig& cfg,
                              const AlternatingOptions& opts = {});

enum class ExtractionMethod { RankOne, Randomized, JointPower, DominantFallback };
std::string to_string(ExtractionMethod m);

struct ExtractionOptions {
  double rank_tol = 1e-6;
  int candidates = 100;
  int repair_passes = 20;
  // A rescaled beam may use at most this multiple of Tr W_k.
  double max_power_ratio = 10.0;
  // Re-solve all powers jointly along the extracted directions when per-flow
  // repair leaves a flow uncertified, halving delta until feasible.
  bool joint_power_repair = true;
  int joint_backoffs = 12;
};

struct Extraction {
  BeamSet beams;
  std::vector<ExtractionMethod> method;
  std::vector<bool> degraded;
  Eigen::VectorXd slack;     // Bernstein slack of the beams at the requested delta
  Eigen::VectorXd achieved;  // largest delta certified by the beams
};

Extraction extract_rank_one(std::span<const Eigen::MatrixXcd> Wset, const CsitRealization& hhat,
                            const Eigen::VectorXd& delta, std::span<const FlowParams> flows, Rng& rng,
                            const ExtractionOptions& opts = {});

struct Diagnostics {
  int sdr_iterations = 0;
  int conic_solves = 0;
  int trace_length = 0;
  int backoffs = 0;
  std::string extraction;  // per-flow methods joined by '|'
  bool failed = false;
  bool degraded = false;
  std::vector<bool> unguaranteed;
};

struct Decision {
  BeamSet beams;
  Eigen::VectorXd per_targets;  // rho_k = e^-delta_k
  Eigen::VectorXd delta;
  Diagnostics diag;
};

struct ControllerContext {
  SystemConfig cfg;
  std::vector<FlowParams> flows;
  std::optional<ApproxValue> value;  // empty when some flow has lambda = 0
  AlternatingOptions alt;
  ExtractionOptions extraction;

  ControllerContext(const SystemConfig& c, std::vector<FlowParams> f);
};

Decision decide(const PolicyKind& kind, const CsitRealization& hhat, const QueueState& Q, const ControllerContext& ctx,
                Rng& rng);

}  // namespace dcbf
