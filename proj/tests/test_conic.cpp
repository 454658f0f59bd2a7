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

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "dcbf/conic.hpp"
#include "conic_instances.hpp"
#include "dcbf/system_model.hpp"

using namespace dcbf;
using namespace dcbf::testing;

TEST_CASE("second-order cone projection") {
  Eigen::Vector3d inside(2.0, 1.0, 1.0);
  CHECK((project_soc(inside) - inside).norm() < 1e-15);
  Eigen::Vector3d polar(-2.0, 1.0, 1.0);
  CHECK(project_soc(polar).norm() < 1e-15);
  Eigen::Vector3d v(0.0, 3.0, 4.0);
  // (t, x) with |x| = 5 > |t|: ((t + |x|)/2) (1, x/|x|)
  const Eigen::VectorXd p = project_soc(v);
  CHECK(p(0) == doctest::Approx(2.5));
  CHECK(p(1) == doctest::Approx(1.5));
  CHECK(p(2) == doctest::Approx(2.0));
  // Idempotent and the residual is in the polar cone.
  CHECK((project_soc(p) - p).norm() < 1e-12);
  CHECK((v - p).dot(p) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("PSD projection is the nearest PSD matrix") {
  Rng rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Matrix2d S;
    S << g(rng), g(rng), 0.0, g(rng);
    S(0, 1) = S(1, 0);
    const Eigen::MatrixXd P = project_psd(S);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().minCoeff() >= -1e-12);
    const double best = (S - P).norm();
    // Dense search over perturbations of the projection; no PSD candidate may be closer.
    for (double d1 = -1.0; d1 <= 1.0; d1 += 0.05)
      for (double d2 = -1.0; d2 <= 1.0; d2 += 0.05)
        for (double off : {-0.2, 0.0, 0.2}) {
          Eigen::Matrix2d C = P;
          C(0, 0) += d1;
          C(1, 1) += d2;
          C(0, 1) += off;
          C(1, 0) += off;
          if (Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(C).eigenvalues().minCoeff() < 0.0) continue;
          CHECK((S - C).norm() >= best - 1e-12);
        }
  }
}

TEST_CASE("Hermitian embedding preserves the spectrum") {
  Rng rng(8);
  for (int n : {1, 2, 4}) {
    const Eigen::MatrixXcd G = complex_gaussian(rng, n, n);
    const Eigen::MatrixXcd H = 0.5 * (G + G.adjoint());
    const Eigen::MatrixXd E = hermitian_embed(H);
    const double min_h = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(H).eigenvalues().minCoeff();
    const double min_e = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(E).eigenvalues().minCoeff();
    CHECK(std::abs(min_h - min_e) < 1e-10);
    CHECK(E.trace() == doctest::Approx(2.0 * H.trace().real()));
  }
}

TEST_CASE("scaled vectorizations preserve inner products") {
  Rng rng(9);
  std::normal_distribution<double> g;
  Eigen::MatrixXd A(3, 3), B(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) A(i, j) = g(rng), B(i, j) = g(rng);
  A = 0.5 * (A + A.transpose()).eval();
  B = 0.5 * (B + B.transpose()).eval();
  CHECK(svec(A).size() == 6);
  CHECK(svec(A).dot(svec(B)) == doctest::Approx((A * B).trace()));
  CHECK((smat(svec(A), 3) - A).norm() < 1e-14);
  CHECK(svec(A)(svec_index(2, 1, 3)) == doctest::Approx(std::sqrt(2.0) * A(2, 1)));

  const Eigen::MatrixXcd G = complex_gaussian(rng, 3, 3), F = complex_gaussian(rng, 3, 3);
  const Eigen::MatrixXcd H = 0.5 * (G + G.adjoint()), K = 0.5 * (F + F.adjoint());
  CHECK(hvec(H).size() == 9);
  CHECK(hvec(H).dot(hvec(K)) == doctest::Approx((H * K).trace().real()));
  CHECK((hmat(hvec(H), 3) - H).norm() < 1e-14);
  CHECK(hvec(H)(hvec_index(1, 1, 3)) == doctest::Approx(H(1, 1).real()));
  CHECK(hvec(H)(hvec_index(2, 0, 3)) == doctest::Approx(std::sqrt(2.0) * H(2, 0).real()));
  CHECK(hvec(H)(hvec_index(2, 0, 3) + 1) == doctest::Approx(std::sqrt(2.0) * H(2, 0).imag()));
}

TEST_CASE("cone projection and duality") {
  const ConeSpec K = ConeSpec{}.zero(1).nonneg(2).soc(3).psd(2).hpsd(2);
  CHECK(K.dim() == 1 + 2 + 3 + 3 + 4);
  Rng rng(10);
  std::normal_distribution<double> g;
  Eigen::VectorXd v(K.dim());
  for (int i = 0; i < v.size(); ++i) v(i) = g(rng);
  const Eigen::VectorXd p = project_cone(v, K);
  const Eigen::VectorXd pd = project_cone(v, K, true);
  CHECK(p(0) == 0.0);
  CHECK(pd(0) == doctest::Approx(v(0)));
  CHECK(cone_distance(p, K) < 1e-12);
  CHECK((project_cone(p, K) - p).norm() < 1e-12);
  // Moreau: v = P_K(v) - P_K*(-v).
  CHECK((v - (p - project_cone(-v, K, true))).norm() < 1e-10);
}

TEST_CASE("analytic instances") {
  const auto instances = analytic_instances();
  REQUIRE(instances.size() == 20);
  for (SolverMethod method : {SolverMethod::InteriorPoint, SolverMethod::OperatorSplitting}) {
    SolverSettings s;
    s.method = method;
    s.tol = 1e-8;
    s.max_iter = method == SolverMethod::InteriorPoint ? 100 : 50000;
    int i = 0;
    for (const auto& inst : instances) {
      CAPTURE(i++);
      CAPTURE(static_cast<int>(method));
      const ConicSolution sol = solve(inst.p, s);
      CHECK(sol.status == SolveStatus::Optimal);
      CHECK(std::abs(sol.objective - inst.optimum) <= 1e-5);
    }
  }
}

TEST_CASE("PSD-part example") {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2, 2);
  B(0, 0) = 1.0;
  B(1, 1) = -1.0;
  const Instance inst = psd_instance(B);
  for (SolverMethod method : {SolverMethod::InteriorPoint, SolverMethod::OperatorSplitting}) {
    SolverSettings s;
    s.method = method;
    const ConicSolution sol = solve(inst.p, s);
    REQUIRE(sol.status == SolveStatus::Optimal);
    const Eigen::MatrixXd X = smat(sol.x, 2);
    CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-5));
    CHECK((X - project_psd(B)).norm() < 1e-4);
  }
}

TEST_CASE("infeasible and unbounded programs are reported") {
  // x >= 1 and x <= 0.
  Eigen::MatrixXd A(2, 1);
  A << -1.0, 1.0;
  const ConicProblem infeasible = make(Eigen::VectorXd::Ones(1), A, Eigen::Vector2d(-1.0, 0.0), ConeSpec{}.nonneg(2));
  // min -x s.t. x >= 0.
  const ConicProblem unbounded =
      make(-Eigen::VectorXd::Ones(1), -Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1), ConeSpec{}.nonneg(1));
  for (SolverMethod method : {SolverMethod::InteriorPoint, SolverMethod::OperatorSplitting}) {
    SolverSettings s;
    s.method = method;
    CHECK(solve(infeasible, s).status == SolveStatus::Infeasible);
    CHECK(solve(unbounded, s).status == SolveStatus::Unbounded);
  }
}

TEST_CASE("solutions satisfy the optimality conditions") {
  Rng rng(12);
  const Instance inst = soc_instance(rng, 3);
  const ConicSolution sol = solve(inst.p, SolverSettings{});
  REQUIRE(sol.status == SolveStatus::Optimal);
  const Eigen::VectorXd r = inst.p.A * sol.x + sol.s - inst.p.b;
  CHECK(r.norm() <= 1e-5 * (1.0 + inst.p.b.norm()));
  CHECK(cone_distance(sol.s, inst.p.cones) < 1e-6);
  CHECK((project_cone(sol.y, inst.p.cones, true) - sol.y).norm() < 1e-6);
  CHECK(std::abs(sol.gap) < 1e-5);
}

TEST_CASE("warm start") {
  Rng rng(13);
  const Instance inst = soc_instance(rng, 4);
  SolverSettings s;
  const ConicSolution cold = solve(inst.p, s);
  REQUIRE(cold.status == SolveStatus::Optimal);
  s.warm_start = &cold;
  const ConicSolution warm = solve(inst.p, s);
  CHECK(warm.status == SolveStatus::Optimal);
  CHECK(warm.iterations <= cold.iterations);
}

TEST_CASE("problem validation and dump") {
  Rng rng(14);
  Instance inst = lp_instance(rng, 2);
  CHECK_NOTHROW(inst.p.validate());
  ConicProblem bad = inst.p;
  bad.b = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = inst.p;
  bad.A = Eigen::MatrixXd::Zero(2, 2).sparseView();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = inst.p;
  bad.cones = ConeSpec{}.nonneg(3);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  std::ostringstream os;
  dump_problem(hpsd_instance(Eigen::MatrixXcd::Identity(2, 2)).p, os);
  CHECK(os.str().find("hpsd_hvec 2") != std::string::npos);
  CHECK(to_string(SolveStatus::Optimal) == "optimal");
}
