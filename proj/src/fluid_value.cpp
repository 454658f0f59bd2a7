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

#include "dcbf/fluid_value.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dcbf {

double exp_integral_e1(double x) {
  if (!(x > 0.0)) throw std::domain_error("exp_integral_e1: x must be > 0, got " + std::to_string(x));
  constexpr double kEps = 1e-16;
  if (x <= 1.0) {
    double sum = 0.0;
    double term = 1.0;  // (-1)^{n+1} x^n / n!
    for (int n = 1; n <= 40; ++n) {
      term *= (n == 1 ? x : -x / n);
      const double contrib = term / n;
      sum += contrib;
      if (std::abs(contrib) < kEps * std::abs(sum)) break;
    }
    return -std::numbers::egamma - std::log(x) + sum;
  }
  // Modified Lentz on the even form of the continued fraction.
  constexpr double kTiny = 1e-300;
  double b = x + 1.0;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (an * d + b);
    c = b + an / c;
    const double del = c * d;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h * std::exp(-x);
}

PerFlowFluid::PerFlowFluid(const FlowParams& flow) : flow_(flow) {
  if (!(flow.rate_R > 0.0) || !(flow.lambda > 0.0) || !(flow.lambda < flow.rate_R))
    throw std::domain_error("PerFlowFluid: need 0 < lambda < R (unstable flow)");
  if (!(flow.gamma > 0.0)) throw std::domain_error("PerFlowFluid: gamma must be > 0");
  const double R = flow.rate_R;
  const double log_ratio = std::log(R / flow.lambda);
  a_ = std::exp2(R) - 1.0;
  c_inf_ = a_ * exp_integral_e1(log_ratio);
  y0_ = a_ / (R * log_ratio);

  const double x0 = a_ / (R * y0_);
  const double bracket = (R * y0_ - a_) / 2.0 * y0_ * std::exp(-x0) - flow.lambda / 2.0 * y0_ * y0_ +
                         a_ * a_ / (2.0 * R) * exp_integral_e1(x0);
  b_ = -(flow.lambda / flow.gamma) * bracket;

  const double q0 = q_raw(y0_, c_inf_);
  if (std::abs(q0) > 1e-8) throw std::logic_error("PerFlowFluid: q(y0) != 0");
}

PerFlowFluid build_per_flow(const FlowParams& flow) { return PerFlowFluid(flow); }

void PerFlowFluid::check_y(double y) const {
  if (!(y >= y0_)) throw std::domain_error("PerFlowFluid: y below y0 is outside the value curve");
}

double PerFlowFluid::q_raw(double y, double c_inf) const {
  const double R = flow_.rate_R;
  const double lam = flow_.lambda;
  const double x = a_ / (R * y);
  return (lam / flow_.gamma) * (R * std::exp(-x) * y - lam * y - a_ * exp_integral_e1(x) + c_inf);
}

double PerFlowFluid::q_of_y(double y) const {
  check_y(y);
  return std::max(0.0, q_raw(y, c_inf_));
}

double PerFlowFluid::j_of_y(double y) const {
  check_y(y);
  const double R = flow_.rate_R;
  const double lam = flow_.lambda;
  const double x = a_ / (R * y);
  const double bracket =
      (R * y - a_) / 2.0 * y * std::exp(-x) - lam / 2.0 * y * y + a_ * a_ / (2.0 * R) * exp_integral_e1(x);
  return (lam / flow_.gamma) * bracket + b_;
}

double PerFlowFluid::ode_residual(double y) const { return ode_residual(y, c_inf_); }

double PerFlowFluid::ode_residual(double y, double c_inf) const {
  check_y(y);
  const double R = flow_.rate_R;
  const double lam = flow_.lambda;
  const double x = a_ / (y * R);
  const double q = q_raw(y, c_inf_);
  return a_ * exp_integral_e1(x) + flow_.gamma * q / lam - c_inf + y * (-R * std::exp(-x) + lam);
}

double PerFlowFluid::j_prime(double Q) const {
  if (!(Q >= 0.0)) throw std::domain_error("j_prime: Q must be >= 0");
  if (Q == 0.0) return y0_;
  double lo = y0_;
  double hi = 2.0 * y0_;
  while (q_raw(hi, c_inf_) < Q) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw std::runtime_error("j_prime: bracket overflow");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (q_raw(mid, c_inf_) < Q)
      lo = mid;
    else
      hi = mid;
  }
  return std::abs(q_raw(lo, c_inf_) - Q) < std::abs(q_raw(hi, c_inf_) - Q) ? lo : hi;
}

double PerFlowFluid::value(double Q) const { return Q == 0.0 ? 0.0 : j_of_y(j_prime(Q)); }

double coupling_coeff(std::span<const FlowParams> flows, int k, int j) {
  const auto& fk = flows[static_cast<std::size_t>(k)];
  const auto& fj = flows[static_cast<std::size_t>(j)];
  if (!(fk.lambda < fk.rate_R) || !(fj.lambda < fj.rate_R))
    throw std::domain_error("coupling_coeff: unstable flow (lambda >= R)");
  const double ak = std::exp2(fk.rate_R) - 1.0;
  const double aj = std::exp2(fj.rate_R) - 1.0;
  return fk.gamma * ak * aj /
         (fk.lambda * (fk.rate_R - fk.lambda) * (fj.rate_R - fj.lambda) * std::exp2(fk.rate_R - 1.0) *
          std::numbers::ln2);
}

CouplingMatrix coupling_matrix(std::span<const FlowParams> flows) {
  const int K = static_cast<int>(flows.size());
  CouplingMatrix out{Eigen::MatrixXd::Zero(K, K)};
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < K; ++j)
      if (j != k) out.D(k, j) = coupling_coeff(flows, k, j);
  return out;
}

double log_plus(double q) { return q > 0.0 ? std::log(std::max(q, kQueueFloor)) : 0.0; }

double approx_value(const QueueState& Q, std::span<const PerFlowFluid> pfs, const CouplingMatrix& D,
                    const Eigen::VectorXd& eps) {
  const int K = static_cast<int>(pfs.size());
  double v = 0.0;
  for (int k = 0; k < K; ++k) v += pfs[static_cast<std::size_t>(k)].value(Q.q(k));
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < K; ++j)
      if (j != k) v += eps(k) * D.D(k, j) * Q.q(k) * Q.q(j) * log_plus(Q.q(j));
  return v;
}

ValueGradient approx_value_gradient(const QueueState& Q, std::span<const PerFlowFluid> pfs,
                                    const CouplingMatrix& D, const Eigen::VectorXd& eps) {
  const int K = static_cast<int>(pfs.size());
  ValueGradient out{Eigen::VectorXd::Zero(K)};
  for (int m = 0; m < K; ++m) {
    double g = pfs[static_cast<std::size_t>(m)].j_prime(Q.q(m));
    for (int j = 0; j < K; ++j)
      if (j != m) g += eps(m) * D.D(m, j) * Q.q(j) * log_plus(Q.q(j));
    if (Q.q(m) > kQueueFloor) {
      const double dlog = log_plus(Q.q(m)) + 1.0;
      for (int k = 0; k < K; ++k)
        if (k != m) g += eps(k) * D.D(k, m) * Q.q(k) * dlog;
    }
    out.g(m) = g;
  }
  return out;
}

ApproxValue::ApproxValue(std::span<const FlowParams> flows)
    : coupling_(coupling_matrix(flows)), eps_(static_cast<Eigen::Index>(flows.size())) {
  per_flow_.reserve(flows.size());
  for (std::size_t k = 0; k < flows.size(); ++k) {
    per_flow_.emplace_back(flows[k]);
    eps_(static_cast<Eigen::Index>(k)) = flows[k].eps;
  }
}

double ApproxValue::value(const QueueState& Q) const { return approx_value(Q, per_flow_, coupling_, eps_); }

ValueGradient ApproxValue::gradient(const QueueState& Q) const {
  return approx_value_gradient(Q, per_flow_, coupling_, eps_);
}

}  // namespace dcbf
