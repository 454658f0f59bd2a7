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

#include "dcbf/bernstein.hpp"
#include "dcbf/oracles.hpp"

using namespace dcbf;

namespace {

Eigen::MatrixXcd random_hermitian(Rng& rng, int n) {
  const Eigen::MatrixXcd G = complex_gaussian(rng, n, n);
  return 0.5 * (G + G.adjoint());
}

}  // namespace

TEST_CASE("quadratic form matches the outage event sample by sample") {
  Rng rng(21);
  for (int inst = 0; inst < 20; ++inst) {
    const int K = 2 + inst % 2, Nt = 3;
    const double eps = 0.05 + 0.01 * inst;
    const double R = 0.3 + 0.05 * inst;
    const Eigen::RowVectorXcd hhat = complex_gaussian(rng, 1, Nt, 1.0 - eps);
    const BeamSet w{complex_gaussian(rng, Nt, K)};
    const QuadFormTriple t = quadform_from_beams(hhat, w, 0, R, eps);
    int mismatches = 0;
    for (int i = 0; i < 2000; ++i) {
      const Eigen::RowVectorXcd v = complex_gaussian(rng, 1, Nt);
      const Eigen::RowVectorXcd h = hhat - std::sqrt(eps) * v;
      const double A = (v * t.M * v.adjoint())(0).real() + 2.0 * (v * t.z)(0).real();
      if ((A >= t.e) != rate_supported(h, w, 0, R)) ++mismatches;
    }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("Bernstein threshold is a lower tail bound") {
  Rng rng(5);
  const int n = 100000;
  for (int inst = 0; inst < 5; ++inst) {
    const int Nt = 2 + inst % 3;
    const Eigen::MatrixXcd M = random_hermitian(rng, Nt);
    const Eigen::VectorXcd z = complex_gaussian(rng, Nt, 1);
    for (double delta : {1.0, 3.0}) {
      const double thr = bernstein_threshold(M, z, delta);
      int above = 0;
      for (int i = 0; i < n; ++i) {
        const Eigen::RowVectorXcd v = complex_gaussian(rng, 1, Nt);
        const double A = (v * M * v.adjoint())(0).real() + 2.0 * (v * z)(0).real();
        if (A >= thr) ++above;
      }
      const double target = 1.0 - std::exp(-delta);
      const double sigma = std::sqrt(target * (1.0 - target) / n);
      CHECK(double(above) / n >= target - 3.0 * sigma);
    }
  }
}

TEST_CASE("certificate pieces") {
  Rng rng(9);
  const Eigen::MatrixXcd M = random_hermitian(rng, 3);
  const Eigen::VectorXcd z = complex_gaussian(rng, 3, 1);

  SUBCASE("threshold decreases in delta") {
    double prev = bernstein_threshold(M, z, 0.0);
    CHECK(prev == doctest::Approx(M.trace().real()));
    for (double d : {0.1, 1.0, 5.0, 20.0}) {
      const double t = bernstein_threshold(M, z, d);
      CHECK(t < prev);
      prev = t;
    }
    CHECK_THROWS_AS(bernstein_threshold(M, z, -1.0), std::invalid_argument);
  }

  SUBCASE("s_plus") {
    const Eigen::MatrixXcd P = M * M.adjoint();
    CHECK(s_plus(P) == 0.0);
    CHECK(s_plus(-P) == doctest::Approx(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(P).eigenvalues().maxCoeff()));
  }

  SUBCASE("soc norm") {
    CHECK(soc_norm(M, z) == doctest::Approx(std::sqrt(M.squaredNorm() + 2.0 * z.squaredNorm())));
  }

  SUBCASE("delta_max is the largest admissible delta") {
    for (auto [margin, x, y] : {std::tuple{1.0, 0.5, 0.2}, std::tuple{3.0, 0.0, 1.0}, std::tuple{0.2, 2.0, 0.0},
                                std::tuple{1e-12, 1.0, 1.0}}) {
      const DeltaMax d = delta_max(margin, x, y);
      CHECK(d.guaranteed);
      CHECK(std::sqrt(2.0 * d.delta) * x + d.delta * y == doctest::Approx(margin).epsilon(1e-9));
    }
    CHECK(delta_max(1.0, 0.0, 0.0).delta == kDeltaCap);
    CHECK(delta_max(1e6, 1.0, 1.0).delta == kDeltaCap);
    const DeltaMax none = delta_max(-0.1, 1.0, 1.0);
    CHECK_FALSE(none.guaranteed);
    CHECK(none.delta == 0.0);
    CHECK_THROWS_AS(delta_max(1.0, -1.0, 0.0), std::invalid_argument);
  }

  SUBCASE("slack at delta_max is zero") {
    const Eigen::RowVectorXcd hhat = complex_gaussian(rng, 1, 3, 0.9);
    BeamSet w{complex_gaussian(rng, 3, 2, 0.05)};
    w.w.col(0) = 3.0 * hhat.adjoint();
    const QuadFormTriple t = quadform_from_beams(hhat, w, 0, 0.3, 0.1);
    const DeltaMax d = delta_max(t.M.trace().real() - t.e, soc_norm(t.M, t.z), s_plus(t.M));
    REQUIRE(d.guaranteed);
    CHECK(std::abs(conservative_feasible(t, d.delta).slack) < 1e-9);
    CHECK(conservative_feasible(t, 0.5 * d.delta).feasible());
    CHECK_FALSE(conservative_feasible(t, 1.5 * d.delta).feasible());
  }
}

TEST_CASE("triple construction") {
  Rng rng(4);
  const Eigen::RowVectorXcd hhat = complex_gaussian(rng, 1, 2);
  std::vector<Eigen::MatrixXcd> W;
  for (int j = 0; j < 2; ++j) {
    const Eigen::VectorXcd g = complex_gaussian(rng, 2, 1);
    W.push_back(g * g.adjoint());
  }
  const double R = 0.5, a = std::exp2(R) - 1.0;
  const Eigen::MatrixXcd B = W[1] / a - W[0];
  const QuadFormTriple t = quadform_from_gram(hhat, W, 1, R, 0.2);
  CHECK((interference_contrast(W, 1, R) - B).norm() < 1e-12);
  CHECK((t.M - 0.2 * B).norm() < 1e-12);
  CHECK((t.z + std::sqrt(0.2) * B * hhat.adjoint()).norm() < 1e-12);
  CHECK(t.e == doctest::Approx(1.0 - (hhat * B * hhat.adjoint())(0).real()));

  // Perfect CSIT: the form vanishes and the certificate is the deterministic SINR condition.
  const QuadFormTriple t0 = quadform_from_gram(hhat, W, 1, R, 0.0);
  CHECK(t0.M.norm() == 0.0);
  CHECK(t0.z.norm() == 0.0);
  CHECK(conservative_feasible(t0, 10.0).slack == doctest::Approx(-t0.e));

  W[0](0, 1) += cplx(0.5, 0.0);
  CHECK_THROWS_AS(quadform_from_gram(hhat, W, 1, R, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(quadform_from_gram(hhat, W, 1, R, 1.5), std::invalid_argument);
}

TEST_CASE("certified beams meet the target under Monte Carlo") {
  Rng rng(33), mc(34);
  FlowParams flow;
  flow.eps = 0.1;
  for (int inst = 0; inst < 5; ++inst) {
    const Eigen::RowVectorXcd hhat = complex_gaussian(rng, 1, 3, 0.9);
    BeamSet w{complex_gaussian(rng, 3, 3, 0.02)};
    w.w.col(0) = 4.0 * hhat.adjoint() / hhat.squaredNorm();
    const QuadFormTriple t = quadform_from_beams(hhat, w, 0, flow.rate_R, flow.eps);
    const DeltaMax d = delta_max(t.M.trace().real() - t.e, soc_norm(t.M, t.z), s_plus(t.M));
    REQUIRE(d.guaranteed);
    const double delta = std::min(d.delta, 6.0);
    REQUIRE(conservative_feasible(t, delta).feasible());
    const PerEstimate per = mc_conditional_per(hhat, w, 0, flow, 20000, mc);
    const double rho = std::exp(-delta);
    CHECK(per.p_hat <= rho + 3.0 * std::sqrt(rho * (1.0 - rho) / 20000.0));
  }
}
