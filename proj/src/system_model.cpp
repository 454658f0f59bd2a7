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

#include "dcbf/system_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dcbf {

void SystemConfig::validate() const {
  if (K < 1) throw std::invalid_argument("SystemConfig: K must be >= 1");
  if (Nt < K) throw std::invalid_argument("SystemConfig: Nt must be >= K");
  if (!(tau > 0.0)) throw std::invalid_argument("SystemConfig: tau must be > 0");
  if (!(bw > 0.0)) throw std::invalid_argument("SystemConfig: bw must be > 0");
  if (!(packet_bits > 0.0)) throw std::invalid_argument("SystemConfig: packet_bits must be > 0");
}

void FlowParams::validate() const {
  if (!(rate_R > 0.0)) throw std::invalid_argument("FlowParams: rate_R must be > 0");
  if (!(lambda >= 0.0 && lambda < rate_R))
    throw std::invalid_argument("FlowParams: need 0 <= lambda < rate_R (stability)");
  if (!(gamma > 0.0)) throw std::invalid_argument("FlowParams: gamma must be > 0");
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("FlowParams: eps must lie in [0, 1]");
}

double FlowParams::sinr_threshold() const { return std::exp2(rate_R) - 1.0; }

void validate_flows(std::span<const FlowParams> flows) {
  for (const auto& f : flows) f.validate();
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_eps(double eps) {
  if (!(eps >= 0.0 && eps <= 1.0))
    throw std::invalid_argument("CSIT error variance must lie in [0, 1], got " + std::to_string(eps));
}

}  // namespace

Rng derive_stream(std::uint64_t master_seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(splitmix64(tag)), static_cast<std::uint32_t>(tag)};
  return Rng(seq);
}

TrialStreams TrialStreams::from_seed(std::uint64_t master_seed) {
  return {derive_stream(master_seed, 1), derive_stream(master_seed, 2), derive_stream(master_seed, 3),
          derive_stream(master_seed, 4)};
}

Eigen::MatrixXcd complex_gaussian(Rng& rng, int rows, int cols, double variance) {
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5 * variance));
  Eigen::MatrixXcd out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const double re = normal(rng);
      const double im = normal(rng);
      out(i, j) = cplx(re, im);
    }
  return out;
}

ChannelRealization sample_channel(Rng& rng, const SystemConfig& cfg) {
  cfg.validate();
  return {complex_gaussian(rng, cfg.K, cfg.Nt)};
}

std::pair<ChannelRealization, CsitRealization> sample_joint_channel_csit(
    Rng& channel_rng, Rng& noise_rng, const SystemConfig& cfg, std::span<const FlowParams> flows) {
  cfg.validate();
  if (static_cast<int>(flows.size()) != cfg.K)
    throw std::invalid_argument("sample_joint_channel_csit: flow count != K");
  for (const auto& f : flows) check_eps(f.eps);

  Eigen::MatrixXcd hhat = complex_gaussian(channel_rng, cfg.K, cfg.Nt);
  const Eigen::MatrixXcd v = complex_gaussian(noise_rng, cfg.K, cfg.Nt);
  Eigen::MatrixXcd h(cfg.K, cfg.Nt);
  for (int k = 0; k < cfg.K; ++k) {
    hhat.row(k) *= std::sqrt(1.0 - flows[k].eps);
    h.row(k) = hhat.row(k) - std::sqrt(flows[k].eps) * v.row(k);
  }
  return {ChannelRealization{std::move(h)}, CsitRealization{std::move(hhat)}};
}

Eigen::RowVectorXcd sample_channel_given_csit(Rng& rng, const Eigen::RowVectorXcd& hhat, double eps) {
  check_eps(eps);
  const Eigen::RowVectorXcd v = complex_gaussian(rng, 1, static_cast<int>(hhat.size()));
  return hhat - std::sqrt(eps) * v;
}

namespace {

struct SinrParts {
  double signal;
  double denom;
};

SinrParts sinr_parts(const Eigen::RowVectorXcd& h_k, const BeamSet& w, int k) {
  if (k < 0 || k >= w.w.cols()) throw std::out_of_range("flow index out of range");
  const Eigen::RowVectorXcd gains = h_k * w.w;
  double interference = 0.0;
  for (int j = 0; j < gains.size(); ++j)
    if (j != k) interference += std::norm(gains(j));
  return {std::norm(gains(k)), 1.0 + interference};
}

}  // namespace

double mutual_information(const Eigen::RowVectorXcd& h_k, const BeamSet& w, int k) {
  const auto p = sinr_parts(h_k, w, k);
  return std::log2(1.0 + p.signal / p.denom);
}

double mutual_information(const ChannelRealization& H, const BeamSet& w, int k) {
  return mutual_information(H.h.row(k), w, k);
}

bool rate_supported(const Eigen::RowVectorXcd& h_k, const BeamSet& w, int k, double rate_R) {
  const auto p = sinr_parts(h_k, w, k);
  return p.signal >= (std::exp2(rate_R) - 1.0) * p.denom;
}

Eigen::VectorXd goodput(const ChannelRealization& H, const BeamSet& w, std::span<const FlowParams> flows) {
  const int K = static_cast<int>(flows.size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(K);
  for (int k = 0; k < K; ++k)
    if (rate_supported(H.h.row(k), w, k, flows[k].rate_R)) g(k) = flows[k].rate_R;
  return g;
}

Eigen::VectorXd sample_arrivals(Rng& rng, std::span<const FlowParams> flows) {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(flows.size()));
  for (std::size_t k = 0; k < flows.size(); ++k) {
    const auto& f = flows[k];
    if (f.lambda <= 0.0) continue;
    std::poisson_distribution<long> packets(f.lambda / f.rate_R);
    a(static_cast<Eigen::Index>(k)) = static_cast<double>(packets(rng)) * f.rate_R;
  }
  return a;
}

QueueState queue_update(const QueueState& Q, const Eigen::VectorXd& served, const Eigen::VectorXd& arrivals) {
  if (served.size() != Q.q.size() || arrivals.size() != Q.q.size())
    throw std::invalid_argument("queue_update: dimension mismatch");
  return {(Q.q - served).cwiseMax(0.0) + arrivals};
}

double per_stage_cost(const QueueState& Q, const BeamSet& w, std::span<const FlowParams> flows) {
  double cost = w.total_power();
  for (std::size_t k = 0; k < flows.size(); ++k)
    cost += flows[k].gamma * Q.q(static_cast<Eigen::Index>(k)) / flows[k].lambda;
  return cost;
}

}  // namespace dcbf
