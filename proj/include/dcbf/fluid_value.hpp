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

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dcbf/system_model.hpp"

namespace dcbf {

/// Exponential integral E1(x) = int_x^inf e^-t / t dt for x > 0.
/// Power series for x <= 1, modified Lentz continued fraction above.
/// Throws std::domain_error for x <= 0.
double exp_integral_e1(double x);

/// Per-flow fluid value function of the decoupled (zero CSIT error) queue.
///
/// The value function is known only parametrically: with y = J'(q) the
/// queue and value are
///   q(y) = (lambda/gamma) (R e^{-a/(R y)} y - lambda y - a E1(a/(R y)) + c_inf)
///   J(y) = (lambda/gamma) ((R y - a)/2 y e^{-a/(R y)} - lambda y^2 / 2
///                          + a^2/(2R) E1(a/(R y))) + b
/// with a = 2^R - 1 and c_inf = a E1(ln(R/lambda)). The curve starts at
/// y0 = a / (R ln(R/lambda)), where q(y0) = 0 and b is fixed so J(y0) = 0.
class PerFlowFluid {
 public:
  /// Throws std::domain_error unless 0 < lambda < R.
  explicit PerFlowFluid(const FlowParams& flow);

  const FlowParams& flow() const { return flow_; }
  double a() const { return a_; }
  double c_inf() const { return c_inf_; }
  double y0() const { return y0_; }
  double b() const { return b_; }

  double q_of_y(double y) const;
  double j_of_y(double y) const;
  /// Left side of the per-flow HJB ODE along the parametric curve (zero on it).
  double ode_residual(double y) const;
  /// Same residual, but with a caller-supplied steady-state cost.
  double ode_residual(double y, double c_inf) const;

  /// J'(Q): inverts q_of_y by bracketed bisection.
  double j_prime(double Q) const;
  /// J(Q) = j_of_y(j_prime(Q)).
  double value(double Q) const;

 private:
  void check_y(double y) const;
  double q_raw(double y, double c_inf) const;

  FlowParams flow_;
  double a_ = 0.0;
  double c_inf_ = 0.0;
  double y0_ = 0.0;
  double b_ = 0.0;
};

PerFlowFluid build_per_flow(const FlowParams& flow);

/// D_kj = gamma_k a_k a_j / (lambda_k (R_k - lambda_k)(R_j - lambda_j) 2^{R_k - 1} ln 2).
double coupling_coeff(std::span<const FlowParams> flows, int k, int j);

struct CouplingMatrix {
  Eigen::MatrixXd D;  // zero diagonal
};

CouplingMatrix coupling_matrix(std::span<const FlowParams> flows);

struct ValueGradient {
  Eigen::VectorXd g;
};

/// Queue values below this are treated as empty in the q ln q coupling term.
inline constexpr double kQueueFloor = 1e-6;

/// ln+(q) = ln(max(q, floor)) for q > 0, and 0 at q = 0.
double log_plus(double q);

/// Closed-form approximate relative value function
///   V(Q) = sum_k J_k(Q_k) + sum_k sum_{j != k} eps_k D_kj Q_k Q_j ln+(Q_j).
class ApproxValue {
 public:
  explicit ApproxValue(std::span<const FlowParams> flows);

  int size() const { return static_cast<int>(per_flow_.size()); }
  const std::vector<PerFlowFluid>& per_flow() const { return per_flow_; }
  const CouplingMatrix& coupling() const { return coupling_; }
  const Eigen::VectorXd& eps() const { return eps_; }

  double value(const QueueState& Q) const;
  /// Literal derivative of value(); entries can be negative when a small
  /// queue sits next to large coupled ones.
  ValueGradient gradient(const QueueState& Q) const;

 private:
  std::vector<PerFlowFluid> per_flow_;
  CouplingMatrix coupling_;
  Eigen::VectorXd eps_;
};

double approx_value(const QueueState& Q, std::span<const PerFlowFluid> pfs, const CouplingMatrix& D,
                    const Eigen::VectorXd& eps);
ValueGradient approx_value_gradient(const QueueState& Q, std::span<const PerFlowFluid> pfs,
                                    const CouplingMatrix& D, const Eigen::VectorXd& eps);

}  // namespace dcbf
