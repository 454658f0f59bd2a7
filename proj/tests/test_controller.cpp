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
#include <vector>

#include <doctest.h>

#include "dcbf/controller.hpp"

using namespace dcbf;

namespace {

SystemConfig config(int K, int Nt) {
  SystemConfig cfg;
  cfg.K = K;
  cfg.Nt = Nt;
  return cfg;
}

std::vector<FlowParams> flows(int K, double eps) {
  FlowParams f;
  f.eps = eps;
  return std::vector<FlowParams>(static_cast<std::size_t>(K), f);
}

CsitRealization csit(Rng& rng, int K, int Nt, double eps) { return {complex_gaussian(rng, K, Nt, 1.0 - eps)}; }

}  // namespace

TEST_CASE("program layout") {
  const Step2Layout L(3, 3);
  CHECK(L.per_flow() == 11);
  CHECK(L.num_vars() == 33);
  CHECK(L.x_index(1) == 20);
  CHECK(L.y_index(2) == 32);
  Rng rng(1);
  const Eigen::MatrixXcd G = complex_gaussian(rng, 3, 3);
  const Eigen::MatrixXcd W = G * G.adjoint();
  Eigen::VectorXd vars = Eigen::VectorXd::Zero(L.num_vars());
  vars.segment(L.w_offset(1), 9) = L.params(W);
  CHECK((L.gram(vars, 1) - W).norm() < 1e-12);
  CHECK(L.gram(vars, 0).norm() == 0.0);
  for (int t = 0; t < 9; ++t) CHECK((L.basis(t) - L.basis(t).adjoint()).norm() == 0.0);

  const auto fl = flows(3, 0.1);
  const std::vector<double> delta(3, 1.0);
  const Step2Program prog = build_step2_program(csit(rng, 3, 3, 0.1), delta, fl, config(3, 3));
  CHECK(prog.problem.A.cols() == 33);
  CHECK(prog.problem.A.rows() == 108);
  CHECK(prog.margin_row.size() == 3);
  CHECK_NOTHROW(prog.problem.validate());
}

TEST_CASE("single flow reduces to matched filtering") {
  Rng rng(2);
  for (double eps : {0.0, 0.2}) {
    const auto fl = flows(1, eps);
    const CsitRealization hhat = csit(rng, 1, 3, eps);
    const std::vector<double> delta{0.0};
    const Step2Result r = solve_step2(hhat, delta, fl, config(1, 3), AlternatingOptions::default_solver());
    REQUIRE(r.status == SolveStatus::Optimal);
    const double a = std::exp2(fl[0].rate_R) - 1.0;
    // At delta = 0 the certificate asks eps Tr W + hhat W hhat^H >= a.
    const double expect = a / (eps + hhat.hhat.row(0).squaredNorm());
    CHECK(std::abs(r.sol.total_trace() - expect) <= 1e-4);
    const Eigen::VectorXcd u = hhat.hhat.row(0).adjoint().normalized();
    const Eigen::MatrixXcd W = r.sol.Wset[0];
    CHECK((W - W.trace().real() * u * u.adjoint()).norm() <= 1e-4);
  }
}

TEST_CASE("surrogate delta update") {
  // Without a penalty the reward pushes delta to the cap; without a reward it stays at 0.
  CHECK(surrogate_delta(0.0, 1.0, 1.0, 1.0) == doctest::Approx(kDeltaCap));
  CHECK(surrogate_delta(1.0, 1.0, 1.0, 0.0) == doctest::Approx(0.0).epsilon(1e-9));
  // x = 0: minimize mu d y + w e^-d, so d = ln(w / (mu y)).
  CHECK(surrogate_delta(1.0, 0.0, 0.5, 4.0) == doctest::Approx(std::log(8.0)).epsilon(1e-6));
}

TEST_CASE("alternating solve") {
  Rng rng(3);
  const auto fl = flows(3, 0.1);
  const SystemConfig cfg = config(3, 3);
  const ApproxValue value(fl);
  for (int inst = 0; inst < 3; ++inst) {
    const CsitRealization hhat = csit(rng, 3, 3, 0.1);
    const QueueState Q{Eigen::Vector3d(0.3 * (inst + 1), 1.2, 0.6)};
    const SdrSolution sol = alternating_solve(hhat, Q, value, fl, cfg);
    CAPTURE(inst);
    CHECK(sol.status == SdrStatus::Converged);
    CHECK(sol.iterations <= 50);
    REQUIRE(!sol.objective_trace.empty());
    for (std::size_t i = 1; i < sol.objective_trace.size(); ++i)
      CHECK(sol.objective_trace[i] <= sol.objective_trace[i - 1] + 1e-6 * (1.0 + std::abs(sol.objective_trace[i - 1])));
    CHECK((sol.delta.array() >= 0.0).all());
    CHECK((sol.delta.array() <= kDeltaCap).all());
    // The returned Gram set certifies its own delta.
    const Eigen::VectorXd margin = bernstein_margins(hhat, sol.Wset, fl);
    for (int k = 0; k < 3; ++k) {
      const auto t = quadform_from_gram(hhat.hhat.row(k), sol.Wset, k, fl[static_cast<std::size_t>(k)].rate_R, 0.1);
      CHECK(conservative_feasible(t, sol.delta(k)).slack >= -1e-5 * (1.0 + std::abs(margin(k))));
    }
  }
}

TEST_CASE("rank-one extraction") {
  Rng rng(4), ex(5);
  const auto fl = flows(2, 0.05);
  const CsitRealization hhat = csit(rng, 2, 3, 0.05);
  const std::vector<double> delta{2.0, 2.0};
  const Step2Result r = solve_step2(hhat, delta, fl, config(2, 3), AlternatingOptions::default_solver());
  REQUIRE(r.status == SolveStatus::Optimal);
  const Extraction e = extract_rank_one(r.sol.Wset, hhat, Eigen::Vector2d(2.0, 2.0), fl, ex);
  CHECK(e.beams.w.rows() == 3);
  CHECK(e.beams.w.cols() == 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(e.method[static_cast<std::size_t>(k)] != ExtractionMethod::DominantFallback);
    CHECK(e.slack(k) >= -1e-6);
    CHECK(e.achieved(k) >= 2.0 - 1e-6);
  }
}

TEST_CASE("policy decisions") {
  Rng rng(6), pol(7);
  const auto fl = flows(2, 0.1);
  const ControllerContext ctx(config(2, 2), fl);
  REQUIRE(ctx.value.has_value());
  const QueueState Q{Eigen::Vector2d(1.0, 2.0)};

  SUBCASE("random beams split the power budget") {
    const Decision d = decide(RandomBeam{2.0}, csit(rng, 2, 2, 0.1), Q, ctx, pol);
    CHECK(d.beams.power()(0) == doctest::Approx(1.0));
    CHECK(d.beams.total_power() == doctest::Approx(2.0));
    CHECK(d.per_targets.isOnes());
  }

  SUBCASE("fixed PER uses its target") {
    const Decision d = decide(FixedPer{0.1}, csit(rng, 2, 2, 0.1), Q, ctx, pol);
    REQUIRE_FALSE(d.diag.failed);
    for (int k = 0; k < 2; ++k) CHECK(d.delta(k) <= std::log(10.0) + 1e-9);
    if (!d.diag.degraded) CHECK(d.per_targets.maxCoeff() == doctest::Approx(0.1).epsilon(1e-6));
  }

  SUBCASE("queue-aware and CSIT-only policies") {
    for (const PolicyKind& kind : {PolicyKind{Proposed{}}, PolicyKind{CsitAdaptivePer{1.0}}}) {
      const Decision d = decide(kind, csit(rng, 2, 2, 0.1), Q, ctx, pol);
      CAPTURE(policy_name(kind));
      CHECK_FALSE(d.diag.failed);
      CHECK(d.beams.total_power() > 0.0);
      CHECK((d.per_targets.array() > 0.0).all());
      CHECK((d.per_targets.array() <= 1.0).all());
    }
  }

  SUBCASE("longer queues earn more reliability") {
    const CsitRealization hhat = csit(rng, 2, 2, 0.1);
    const Decision lo = decide(Proposed{}, hhat, QueueState{Eigen::Vector2d(0.3, 0.3)}, ctx, pol);
    const Decision hi = decide(Proposed{}, hhat, QueueState{Eigen::Vector2d(30.0, 30.0)}, ctx, pol);
    CHECK(hi.delta.sum() >= lo.delta.sum() - 1e-6);
    CHECK(hi.beams.total_power() >= lo.beams.total_power() - 1e-6);
  }

  SUBCASE("invalid input") {
    CHECK_THROWS_AS(decide(FixedPer{1.5}, csit(rng, 2, 2, 0.1), Q, ctx, pol), std::invalid_argument);
    CHECK_THROWS_AS(decide(Proposed{}, csit(rng, 3, 2, 0.1), Q, ctx, pol), std::invalid_argument);
    CHECK_THROWS_AS(decide(Proposed{}, csit(rng, 2, 2, 0.1), QueueState{Eigen::Vector2d(-1.0, 0.0)}, ctx, pol),
                    std::invalid_argument);
  }
}

TEST_CASE("fixed-direction power program") {
  Rng rng(8);
  const auto fl = flows(3, 0.1);
  const SystemConfig cfg = config(3, 3);
  const CsitRealization hhat = csit(rng, 3, 3, 0.1);
  const std::vector<double> delta(3, 1.0);
  const Step2Result r = solve_step2(hhat, delta, fl, cfg, AlternatingOptions::default_solver());
  REQUIRE(r.status == SolveStatus::Optimal);
  Eigen::MatrixXcd U(3, 3);
  for (int k = 0; k < 3; ++k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(r.sol.Wset[static_cast<std::size_t>(k)]);
    U.col(k) = es.eigenvectors().col(2);
  }
  const ConicProblem prog = build_power_program(hhat, U, delta, fl, cfg);
  CHECK(prog.A.cols() == 9);
  CHECK_NOTHROW(prog.validate());

  const auto p = certified_powers(hhat, U, delta, fl, AlternatingOptions::default_solver());
  REQUIRE(p.has_value());
  const BeamSet beams{U * p->cwiseSqrt().asDiagonal()};
  for (int k = 0; k < 3; ++k) {
    const auto t = quadform_from_beams(hhat.hhat.row(k), beams, k, fl[0].rate_R, fl[0].eps);
    CHECK(conservative_feasible(t, 1.0).slack >= -1e-6);
  }
  // Restricting the directions cannot beat the relaxation.
  CHECK(p->sum() >= r.sol.total_trace() - 1e-5);

  // A perturbed direction set is still certified by the joint repair.
  Eigen::MatrixXcd V = U + 0.3 * complex_gaussian(rng, 3, 3);
  std::vector<Eigen::MatrixXcd> Wset;
  for (int k = 0; k < 3; ++k) Wset.push_back(p->coeff(k) * V.col(k).normalized() * V.col(k).normalized().adjoint());
  Rng ex(9);
  const Extraction e = extract_rank_one(Wset, hhat, Eigen::Vector3d(1.0, 1.0, 1.0), fl, ex);
  for (int k = 0; k < 3; ++k) CHECK((e.slack(k) >= -1e-6 || e.degraded[static_cast<std::size_t>(k)]));
  for (int k = 0; k < 3; ++k) {
    const auto t = quadform_from_beams(hhat.hhat.row(k), e.beams, k, fl[0].rate_R, fl[0].eps);
    CHECK(conservative_feasible(t, e.achieved(k)).slack >= -1e-6);
  }
}
