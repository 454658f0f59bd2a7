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

#include <Eigen/Dense>

#include "dcbf/system_model.hpp"

namespace dcbf {

// Conditional outage of flow k given its estimate hhat_k.
//
// With h = hhat - sqrt(eps) v, v ~ CN(0, I), and
//   B = W_k / (2^R - 1) - sum_{j != k} W_j,
// decoding succeeds iff h B h^H >= 1, which rearranges to
//   v M v^H + 2 Re(v z) >= e
// with M = eps B, z = -sqrt(eps) B hhat^H and e = 1 - hhat B hhat^H.
struct QuadFormTriple {
  Eigen::MatrixXcd M;
  Eigen::VectorXcd z;
  double e = 1.0;
};

/// Largest delta accepted anywhere; rho = e^-delta never goes below e^-50.
inline constexpr double kDeltaCap = 50.0;

/// Build (M, z, e) for flow k from Gram matrices W_j (all Nt x Nt Hermitian).
/// Throws std::invalid_argument on non-Hermitian input or bad eps.
QuadFormTriple quadform_from_gram(const Eigen::RowVectorXcd& hhat_k, std::span<const Eigen::MatrixXcd> W,
                                  int k, double rate_R, double eps);

/// Same with rank-one W_j = w_j w_j^H taken from a beam set.
QuadFormTriple quadform_from_beams(const Eigen::RowVectorXcd& hhat_k, const BeamSet& w, int k, double rate_R,
                                   double eps);

/// The matrix B above (Hermitian).
Eigen::MatrixXcd interference_contrast(std::span<const Eigen::MatrixXcd> W, int k, double rate_R);

/// max(lambda_max(-M), 0).
double s_plus(const Eigen::MatrixXcd& M);

/// Tr M - sqrt(2 delta) sqrt(||M||_F^2 + 2 ||z||^2) - delta s+(M).
/// With probability at least 1 - e^-delta, v M v^H + 2 Re(v z) is above it.
double bernstein_threshold(const Eigen::MatrixXcd& M, const Eigen::VectorXcd& z, double delta);

struct BernsteinCertificate {
  double delta = 0.0;
  double threshold = 0.0;
  double slack = 0.0;  // threshold - e

  bool feasible() const { return slack >= 0.0; }
};

/// A nonnegative slack certifies conditional outage <= e^-delta.
BernsteinCertificate conservative_feasible(const QuadFormTriple& t, double delta);

struct DeltaMax {
  double delta = 0.0;
  bool guaranteed = false;  // false when the margin is not positive
};

/// Largest delta in [0, kDeltaCap] with sqrt(2 delta) x + delta y <= margin.
DeltaMax delta_max(double margin, double x, double y);

/// sqrt(||M||_F^2 + 2 ||z||^2), the smallest admissible SOC slack for (M, z).
double soc_norm(const Eigen::MatrixXcd& M, const Eigen::VectorXcd& z);

}  // namespace dcbf
