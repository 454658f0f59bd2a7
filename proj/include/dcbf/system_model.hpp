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

#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dcbf {

using cplx = std::complex<double>;
using Rng = std::mt19937_64;

// Rates and queues are in normalized service units: bits / (tau * bw).
// A packet of R_k * tau * bw bits is therefore R_k units long.
struct SystemConfig {
  int K = 1;
  int Nt = 1;
  double tau = 0.005;
  double bw = 1e7;
  double packet_bits = 15000.0;

  void validate() const;
  // Spectral efficiency that drains one packet per slot.
  double packet_rate() const { return packet_bits / (tau * bw); }
};

struct FlowParams {
  double rate_R = 0.3;
  double lambda = 0.24;
  double gamma = 1.0;
  double eps = 0.1;

  void validate() const;
  // 2^R - 1, the SINR needed to carry rate R.
  double sinr_threshold() const;
};

void validate_flows(std::span<const FlowParams> flows);

/// Row k holds h_k (1 x Nt).
struct ChannelRealization {
  Eigen::MatrixXcd h;
};

/// Row k holds the MMSE estimate hhat_k.
struct CsitRealization {
  Eigen::MatrixXcd hhat;
};

struct QueueState {
  Eigen::VectorXd q;
};

/// Column k holds w_k (Nt x 1).
struct BeamSet {
  Eigen::MatrixXcd w;

  static BeamSet zeros(int Nt, int K) { return {Eigen::MatrixXcd::Zero(Nt, K)}; }
  Eigen::VectorXd power() const { return w.colwise().squaredNorm().transpose(); }
  double total_power() const { return w.squaredNorm(); }
};

// Named per-trial streams, all derived from one master seed.
struct TrialStreams {
  Rng channel;
  Rng csit_noise;
  Rng arrivals;
  Rng policy;

  static TrialStreams from_seed(std::uint64_t master_seed);
};

Rng derive_stream(std::uint64_t master_seed, std::uint64_t tag);

// Matrix of i.i.d. CN(0, variance) entries.
Eigen::MatrixXcd complex_gaussian(Rng& rng, int rows, int cols, double variance = 1.0);

ChannelRealization sample_channel(Rng& rng, const SystemConfig& cfg);

/// hhat_k ~ CN(0, (1 - eps_k) I) from the channel stream, v_k ~ CN(0, I) from
/// the noise stream, and h_k = hhat_k - sqrt(eps_k) v_k. This keeps Var(h) = 1
/// and E[(hhat - h) hhat^H] = 0.
std::pair<ChannelRealization, CsitRealization> sample_joint_channel_csit(
    Rng& channel_rng, Rng& noise_rng, const SystemConfig& cfg,
    std::span<const FlowParams> flows);

/// Draw from the conditional law h | hhat used by the PER oracle.
Eigen::RowVectorXcd sample_channel_given_csit(Rng& rng, const Eigen::RowVectorXcd& hhat,
                                              double eps);

// log2(1 + SINR_k) in bit/s/Hz.
double mutual_information(const ChannelRealization& H, const BeamSet& w, int k);
double mutual_information(const Eigen::RowVectorXcd& h_k, const BeamSet& w, int k);

// True iff R_k <= C_k. The comparison is done on SINR against 2^R - 1.
bool rate_supported(const Eigen::RowVectorXcd& h_k, const BeamSet& w, int k, double rate_R);

/// G_k = R_k * 1(R_k <= C_k(H, w)).
Eigen::VectorXd goodput(const ChannelRealization& H, const BeamSet& w,
                        std::span<const FlowParams> flows);

/// Poisson packet count with mean lambda_k / R_k, in units of R_k.
Eigen::VectorXd sample_arrivals(Rng& rng, std::span<const FlowParams> flows);

QueueState queue_update(const QueueState& Q, const Eigen::VectorXd& served,
                        const Eigen::VectorXd& arrivals);

/// sum_k ( ||w_k||^2 + gamma_k Q_k / lambda_k ).
double per_stage_cost(const QueueState& Q, const BeamSet& w, std::span<const FlowParams> flows);

}  // namespace dcbf
