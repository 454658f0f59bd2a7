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

#include "dcbf/system_model.hpp"

using namespace dcbf;

TEST_CASE("config validation") {
  SystemConfig cfg;
  cfg.K = 2;
  cfg.Nt = 2;
  CHECK_NOTHROW(cfg.validate());
  cfg.K = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.K = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.K = 2;
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  // 15000 bits in a 5 ms slot over 10 MHz is 0.3 bit/s/Hz.
  CHECK(SystemConfig{}.packet_rate() == doctest::Approx(0.3));

  FlowParams f;
  CHECK_NOTHROW(f.validate());
  CHECK(f.sinr_threshold() == doctest::Approx(std::exp2(0.3) - 1.0));
  f.lambda = 0.3;
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);
  f.lambda = 0.24;
  f.eps = 1.5;
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);
  f.eps = 0.1;
  f.gamma = 0.0;
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);
}

TEST_CASE("streams are reproducible and distinct") {
  TrialStreams a = TrialStreams::from_seed(42);
  TrialStreams b = TrialStreams::from_seed(42);
  CHECK(a.channel() == b.channel());
  CHECK(a.policy() == b.policy());
  TrialStreams c = TrialStreams::from_seed(42);
  CHECK(c.channel() != c.csit_noise());
  CHECK(derive_stream(1, 5)() != derive_stream(2, 5)());
}

TEST_CASE("channel rows are uncorrelated with unit variance") {
  SystemConfig cfg;
  cfg.K = 2;
  cfg.Nt = 2;
  Rng rng(3);
  const int n = 100000;
  cplx cross = 0.0;
  double power = 0.0;
  for (int i = 0; i < n; ++i) {
    const ChannelRealization H = sample_channel(rng, cfg);
    cross += H.h(0, 0) * std::conj(H.h(1, 0));
    power += std::norm(H.h(0, 1));
  }
  CHECK(std::abs(cross / double(n)) < 0.02);
  CHECK(power / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("joint channel and estimate") {
  SystemConfig cfg;
  cfg.K = 2;
  cfg.Nt = 2;
  const int n = 100000;

  SUBCASE("perfect CSIT") {
    std::vector<FlowParams> flows(2);
    for (auto& f : flows) f.eps = 0.0;
    Rng ch(1), no(2);
    for (int i = 0; i < 100; ++i) {
      const auto [H, Hh] = sample_joint_channel_csit(ch, no, cfg, flows);
      CHECK((H.h - Hh.hhat).norm() == 0.0);
    }
  }
  SUBCASE("no CSIT") {
    std::vector<FlowParams> flows(2);
    for (auto& f : flows) f.eps = 1.0;
    Rng ch(1), no(2);
    cplx corr = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto [H, Hh] = sample_joint_channel_csit(ch, no, cfg, flows);
      corr += H.h(0, 0) * std::conj(Hh.hhat(0, 0));
    }
    CHECK(std::abs(corr / double(n)) < 0.02);
  }
  SUBCASE("estimation error is orthogonal to the estimate") {
    for (double eps : {0.05, 0.25, 0.6}) {
      std::vector<FlowParams> flows(2);
      for (auto& f : flows) f.eps = eps;
      Rng ch(11), no(12);
      cplx sum = 0.0;
      double sq = 0.0, var = 0.0;
      for (int i = 0; i < n; ++i) {
        const auto [H, Hh] = sample_joint_channel_csit(ch, no, cfg, flows);
        const cplx x = (Hh.hhat(1, 0) - H.h(1, 0)) * std::conj(Hh.hhat(1, 0));
        sum += x;
        sq += std::norm(x);
        var += std::norm(H.h(1, 1));
      }
      const cplx mean = sum / double(n);
      const double se = std::sqrt((sq / n - std::norm(mean)) / n);
      CHECK(std::abs(mean) <= 3.0 * se * std::sqrt(2.0));
      CHECK(var / n == doctest::Approx(1.0).epsilon(0.02));
    }
  }
  SUBCASE("bad eps is rejected") {
    std::vector<FlowParams> flows(2);
    flows[1].eps = -0.1;
    Rng ch(1), no(2);
    CHECK_THROWS_AS(sample_joint_channel_csit(ch, no, cfg, flows), std::invalid_argument);
  }
}

TEST_CASE("mutual information and goodput") {
  SystemConfig cfg;
  cfg.K = 2;
  cfg.Nt = 2;
  ChannelRealization H{Eigen::MatrixXcd(2, 2)};
  H.h << cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(2, 0);
  BeamSet w{Eigen::MatrixXcd::Zero(2, 2)};
  w.w(0, 0) = 1.0;
  w.w(1, 1) = 0.5;
  // Orthogonal: SINR_0 = 1, SINR_1 = |2 * 0.5|^2 = 1.
  CHECK(mutual_information(H, w, 0) == doctest::Approx(1.0));
  CHECK(mutual_information(H, w, 1) == doctest::Approx(1.0));

  w.w(1, 0) = 1.0;  // flow 0's beam now leaks into flow 1: SINR_1 = 1 / (1 + 4)
  CHECK(mutual_information(H, w, 1) == doctest::Approx(std::log2(1.2)));

  std::vector<FlowParams> flows(2);
  flows[0].rate_R = 1.0;  // exactly supported
  flows[1].rate_R = 0.3;  // C = log2(1.2) = 0.263 < 0.3: outage
  const Eigen::VectorXd g = goodput(H, w, flows);
  CHECK(g(0) == doctest::Approx(1.0));
  CHECK(g(1) == 0.0);

  const Eigen::RowVectorXcd h = Eigen::RowVectorXcd::Ones(1);
  BeamSet single{Eigen::MatrixXcd::Constant(1, 1, std::sqrt(std::exp2(0.3) - 1.0) * (1.0 + 1e-12))};
  CHECK(rate_supported(h, single, 0, 0.3));
  single.w(0, 0) *= 0.999;
  CHECK_FALSE(rate_supported(h, single, 0, 0.3));
}

TEST_CASE("arrivals have the configured mean") {
  std::vector<FlowParams> flows(1);
  Rng rng(5);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd a = sample_arrivals(rng, flows);
    const double packets = a(0) / 0.3;
    CHECK(std::abs(packets - std::round(packets)) < 1e-9);
    sum += a(0);
  }
  CHECK(std::abs(sum / n - 0.24) < 0.005);

  flows[0].lambda = 0.0;
  CHECK(sample_arrivals(rng, flows)(0) == 0.0);
}

TEST_CASE("queue update retains bits on failure") {
  QueueState Q{Eigen::Vector2d(0.6, 0.0)};
  const QueueState next = queue_update(Q, Eigen::Vector2d(0.3, 0.3), Eigen::Vector2d(0.0, 0.9));
  CHECK(next.q(0) == doctest::Approx(0.3));
  CHECK(next.q(1) == doctest::Approx(0.9));
  const QueueState kept = queue_update(Q, Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero());
  CHECK(kept.q(0) == doctest::Approx(0.6));
  CHECK_THROWS_AS(queue_update(Q, Eigen::Vector3d::Zero(), Eigen::Vector2d::Zero()), std::invalid_argument);
}

TEST_CASE("per-stage cost") {
  std::vector<FlowParams> flows(2);
  flows[1].gamma = 2.0;
  QueueState Q{Eigen::Vector2d(0.48, 0.24)};
  BeamSet w{Eigen::MatrixXcd::Zero(2, 2)};
  w.w(0, 0) = cplx(1.0, 1.0);
  // power 2, delay terms 0.48/0.24 + 2 * 0.24/0.24
  CHECK(per_stage_cost(Q, w, flows) == doctest::Approx(2.0 + 2.0 + 2.0));
}

TEST_CASE("conditional channel draws match the estimate model") {
  Rng rng(8);
  const Eigen::RowVectorXcd hhat = Eigen::RowVectorXcd::Constant(2, cplx(0.5, -0.5));
  const int n = 50000;
  Eigen::RowVectorXcd mean = Eigen::RowVectorXcd::Zero(2);
  double spread = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::RowVectorXcd h = sample_channel_given_csit(rng, hhat, 0.2);
    mean += h;
    spread += (h - hhat).squaredNorm();
  }
  mean /= double(n);
  CHECK((mean - hhat).norm() < 0.02);
  CHECK(spread / n == doctest::Approx(2 * 0.2).epsilon(0.03));
}
