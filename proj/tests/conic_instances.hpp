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

#include <cmath>
#include <random>
#include <vector>

#include "dcbf/conic.hpp"
#include "dcbf/system_model.hpp"

// Conic programs with closed-form optima, shared by the unit and acceptance tests.

namespace dcbf::testing {

struct Instance {
  ConicProblem p;
  double optimum = 0.0;
};

inline ConicProblem make(const Eigen::VectorXd& c, const Eigen::MatrixXd& A, const Eigen::VectorXd& b, ConeSpec K) {
  ConicProblem p;
  p.c = c;
  p.A = A.sparseView();
  p.b = b;
  p.cones = std::move(K);
  return p;
}

// min c'x s.t. x >= l, c > 0.
inline Instance lp_instance(Rng& rng, int n) {
  std::uniform_real_distribution<double> u(0.1, 2.0);
  Eigen::VectorXd c(n), l(n);
  for (int i = 0; i < n; ++i) c(i) = u(rng), l(i) = u(rng) - 1.0;
  return {make(c, -Eigen::MatrixXd::Identity(n, n), -l, ConeSpec{}.nonneg(n)), c.dot(l)};
}

// min t s.t. ||x - p|| <= t, x = q.
inline Instance soc_instance(Rng& rng, int n) {
  std::normal_distribution<double> g;
  Eigen::VectorXd p(n), q(n);
  for (int i = 0; i < n; ++i) p(i) = g(rng), q(i) = g(rng);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n + 1, n + 1);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(2 * n + 1);
  A.block(0, 1, n, n) = Eigen::MatrixXd::Identity(n, n);
  b.head(n) = q;
  A(n, 0) = -1.0;
  A.block(n + 1, 1, n, n) = -Eigen::MatrixXd::Identity(n, n);
  b.tail(n) = -p;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n + 1);
  c(0) = 1.0;
  return {make(c, A, b, ConeSpec{}.zero(n).soc(n + 1)), (q - p).norm()};
}

// min Tr X s.t. X - B >= 0, X >= 0; optimum is the sum of positive eigenvalues of B.
inline Instance psd_instance(const Eigen::MatrixXd& B) {
  const int n = static_cast<int>(B.rows());
  const int d = n * (n + 1) / 2;
  Eigen::MatrixXd A(2 * d, d);
  A << -Eigen::MatrixXd::Identity(d, d), -Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(2 * d);
  b.head(d) = -svec(B);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(B).eigenvalues();
  return {make(svec(Eigen::MatrixXd::Identity(n, n)), A, b, ConeSpec{}.psd(n).psd(n)), ev.cwiseMax(0.0).sum()};
}

inline Instance hpsd_instance(const Eigen::MatrixXcd& B) {
  const int n = static_cast<int>(B.rows());
  const int d = n * n;
  Eigen::MatrixXd A(2 * d, d);
  A << -Eigen::MatrixXd::Identity(d, d), -Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(2 * d);
  b.head(d) = -hvec(B);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(B).eigenvalues();
  const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(n, n);
  return {make(hvec(I), A, b, ConeSpec{}.hpsd(n).hpsd(n)), ev.cwiseMax(0.0).sum()};
}

inline std::vector<Instance> analytic_instances() {
  Rng rng(2024);
  std::normal_distribution<double> g;
  std::vector<Instance> out;
  for (int i = 0; i < 7; ++i) out.push_back(lp_instance(rng, 2 + i % 4));
  for (int i = 0; i < 6; ++i) out.push_back(soc_instance(rng, 2 + i % 3));
  for (int i = 0; i < 5; ++i) {
    const int n = 2 + i % 2;
    Eigen::MatrixXd G(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) G(r, c) = g(rng);
    out.push_back(psd_instance(0.5 * (G + G.transpose())));
  }
  for (int i = 0; i < 2; ++i) {
    const Eigen::MatrixXcd G = complex_gaussian(rng, 3, 3);
    out.push_back(hpsd_instance(0.5 * (G + G.adjoint())));
  }
  return out;
}

}  // namespace dcbf::testing
