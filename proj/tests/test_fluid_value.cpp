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
#include <limits>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <doctest.h>

#include "dcbf/fluid_value.hpp"

using namespace dcbf;

namespace {

// Quadrature reference for E1, independent of the series / continued fraction.
double e1_quadrature(double x) {
  boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate([x](double t) { return std::exp(-(x + t)) / (x + t); });
}

// q(y) straight from the parametric formula with the reference E1.
double q_reference(const FlowParams& f, double y) {
  const double a = std::exp2(f.rate_R) - 1.0;
  const double c_inf = a * e1_quadrature(std::log(f.rate_R / f.lambda));
  const double x = a / (f.rate_R * y);
  return f.lambda / f.gamma *
         (f.rate_R * std::exp(-x) * y - f.lambda * y - a * e1_quadrature(x) + c_inf);
}

FlowParams flow(double R, double lambda, double gamma) {
  FlowParams f;
  f.rate_R = R;
  f.lambda = lambda;
  f.gamma = gamma;
  return f;
}

}  // namespace

TEST_CASE("exponential integral") {
  // Frozen from a 30-digit evaluation; the quadrature reference agrees.
  CHECK(exp_integral_e1(1.0) == doctest::Approx(0.21938393439552027).epsilon(1e-12));
  CHECK(std::abs(exp_integral_e1(10.0) - 4.156968929685324e-6) < 1e-9);
  CHECK(exp_integral_e1(0.5) == doctest::Approx(0.55977359477616081).epsilon(1e-12));
  CHECK(exp_integral_e1(3.0) == doctest::Approx(0.013048381094197037).epsilon(1e-12));
  for (double x : {1e-6, 1e-3, 0.1, 0.7, 0.999, 1.0, 1.001, 2.5, 7.0, 30.0, 200.0})
    CHECK(exp_integral_e1(x) == doctest::Approx(e1_quadrature(x)).epsilon(1e-10));
  CHECK_THROWS_AS(exp_integral_e1(0.0), std::domain_error);
  CHECK_THROWS_AS(exp_integral_e1(-1.0), std::domain_error);
  CHECK_THROWS_AS(exp_integral_e1(std::numeric_limits<double>::quiet_NaN()), std::domain_error);
}

TEST_CASE("per-flow constants") {
  const PerFlowFluid pf(flow(0.3, 0.24, 1.0));
  CHECK(pf.a() == doctest::Approx(0.23114441334491628).epsilon(1e-12));
  CHECK(pf.y0() == doctest::Approx(3.4528507468784891).epsilon(1e-10));
  CHECK(pf.c_inf() == doctest::Approx(0.26212052861525823).epsilon(1e-10));
  CHECK(std::abs(q_reference(flow(0.3, 0.24, 1.0), pf.y0())) < 1e-10);
  CHECK(std::abs(pf.q_of_y(pf.y0())) < 1e-8);
  CHECK(std::abs(pf.j_of_y(pf.y0())) < 1e-8);
  CHECK_THROWS_AS(PerFlowFluid(flow(0.3, 0.3, 1.0)), std::domain_error);
  CHECK_THROWS_AS(PerFlowFluid(flow(0.3, 0.0, 1.0)), std::domain_error);
  CHECK_THROWS_AS(pf.q_of_y(0.5 * pf.y0()), std::domain_error);
}

TEST_CASE("parametric curve") {
  for (const FlowParams& f : {flow(0.3, 0.24, 1.0), flow(1.0, 0.4, 3.0), flow(1.0, 0.8, 0.5)}) {
    const PerFlowFluid pf(f);
    CAPTURE(f.rate_R);
    CHECK(pf.q_of_y(pf.y0() + 1.0) < pf.q_of_y(pf.y0() + 2.0));

    for (double m : {1.5, 2.0, 5.0, 20.0, 300.0})
      CHECK(pf.q_of_y(m * pf.y0()) == doctest::Approx(q_reference(f, m * pf.y0())).epsilon(1e-9));

    // The ODE holds along the curve.
    for (double m : {2.0, 5.0, 20.0}) CHECK(std::abs(pf.ode_residual(m * pf.y0())) <= 1e-6);

    // dJ/dq equals y along the curve.
    for (double m : {1.2, 3.0, 40.0}) {
      const double y = m * pf.y0();
      const double h = 1e-5 * y;
      const double slope = (pf.j_of_y(y + h) - pf.j_of_y(y - h)) / (pf.q_of_y(y + h) - pf.q_of_y(y - h));
      CHECK(slope == doctest::Approx(y).epsilon(1e-5));
    }

    // Large-y behaviour.
    const double y = 1e3 * pf.y0();
    const double slope = f.lambda * (f.rate_R - f.lambda) / f.gamma;
    CHECK(pf.q_of_y(y) / (slope * y) == doctest::Approx(1.0).epsilon(0.05));
    const double q = 1e3;
    CHECK(pf.value(q) / (q * q) == doctest::Approx(f.gamma / (2 * f.lambda * (f.rate_R - f.lambda))).epsilon(0.05));
    CHECK(pf.j_prime(q) == doctest::Approx(f.gamma / (f.lambda * (f.rate_R - f.lambda)) * q).epsilon(0.05));
  }
}

TEST_CASE("j_prime inverts the queue map") {
  const PerFlowFluid pf(flow(0.3, 0.24, 2.0));
  CHECK(pf.j_prime(0.0) == doctest::Approx(pf.y0()));
  double prev = pf.j_prime(0.0);
  for (double Q : {1e-4, 0.01, 0.3, 1.0, 7.5, 60.0, 1e3}) {
    const double y = pf.j_prime(Q);
    CHECK(pf.q_of_y(y) == doctest::Approx(Q).epsilon(1e-9));
    CHECK(y > prev);
    prev = y;
  }
  CHECK_THROWS_AS(pf.j_prime(-1.0), std::domain_error);
  // J is increasing and convex.
  CHECK(pf.value(0.0) == doctest::Approx(0.0).epsilon(1e-12));
  const double a = pf.value(1.0), b = pf.value(2.0), c = pf.value(3.0);
  CHECK(a < b);
  CHECK(b < c);
  CHECK(c - b > b - a);
}

TEST_CASE("coupling coefficients") {
  const std::vector<FlowParams> flows{flow(0.3, 0.24, 1.0), flow(0.5, 0.2, 2.0), flow(1.0, 0.6, 0.7)};
  const CouplingMatrix D = coupling_matrix(flows);
  for (int k = 0; k < 3; ++k) {
    CHECK(D.D(k, k) == 0.0);
    for (int j = 0; j < 3; ++j) {
      if (j == k) continue;
      const auto& fk = flows[k];
      const auto& fj = flows[j];
      const double ak = std::pow(2.0, fk.rate_R) - 1.0, aj = std::pow(2.0, fj.rate_R) - 1.0;
      const double expect = fk.gamma * ak * aj /
                            (fk.lambda * (fk.rate_R - fk.lambda) * (fj.rate_R - fj.lambda) *
                             std::pow(2.0, fk.rate_R - 1.0) * std::log(2.0));
      CHECK(D.D(k, j) == doctest::Approx(expect).epsilon(1e-12));
      CHECK(D.D(k, j) > 0.0);
    }
  }
}

TEST_CASE("approximate value function") {
  std::vector<FlowParams> flows{flow(0.3, 0.24, 1.0), flow(0.3, 0.2, 2.0), flow(0.5, 0.3, 1.5)};

  SUBCASE("zero CSIT error decouples") {
    for (auto& f : flows) f.eps = 0.0;
    const ApproxValue V(flows);
    const QueueState Q{Eigen::Vector3d(1.2, 0.0, 4.5)};
    double sum = 0.0;
    for (int k = 0; k < 3; ++k) sum += PerFlowFluid(flows[k]).value(Q.q(k));
    CHECK(V.value(Q) == doctest::Approx(sum).epsilon(1e-14));
  }

  SUBCASE("gradient matches central differences") {
    for (auto& f : flows) f.eps = 0.1;
    const ApproxValue V(flows);
    Rng rng(17);
    std::uniform_real_distribution<double> u(1.0, 20.0);
    for (int i = 0; i < 30; ++i) {
      const QueueState Q{Eigen::Vector3d(u(rng), u(rng), u(rng))};
      const Eigen::VectorXd g = V.gradient(Q).g;
      for (int m = 0; m < 3; ++m) {
        const double d = 1e-5;
        QueueState up = Q, dn = Q;
        up.q(m) += d;
        dn.q(m) -= d;
        CHECK(std::abs(g(m) - (V.value(up) - V.value(dn)) / (2 * d)) <= 1e-4);
      }
    }
  }

  SUBCASE("log_plus") {
    CHECK(log_plus(0.0) == 0.0);
    CHECK(log_plus(1e-9) == doctest::Approx(std::log(kQueueFloor)));
    CHECK(log_plus(2.0) == doctest::Approx(std::log(2.0)));
  }
}
