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

#include "dcbf/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dcbf/bernstein.hpp"

namespace dcbf {

namespace {

constexpr double kZ95 = 1.959963984540054;

std::vector<double> poisson_pmf(double mean, int max_count) {
  std::vector<double> pmf(static_cast<std::size_t>(max_count) + 1, 0.0);
  double term = std::exp(-mean);
  for (int n = 0; n <= max_count; ++n) {
    pmf[n] = term;
    term *= mean / (n + 1);
  }
  return pmf;
}

std::vector<double> ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

Eigen::MatrixXcd random_gram(Rng& rng, int Nt) {
  const Eigen::MatrixXcd G = complex_gaussian(rng, Nt, Nt, 1.0 / Nt);
  return G * G.adjoint();
}

}  // namespace

PerEstimate wilson_estimate(long failures, long n) {
  if (n <= 0 || failures < 0 || failures > n) throw std::invalid_argument("wilson_estimate: bad counts");
  PerEstimate e;
  e.n = n;
  const double nn = static_cast<double>(n);
  e.p_hat = static_cast<double>(failures) / nn;
  const double z2 = kZ95 * kZ95;
  const double denom = 1.0 + z2 / nn;
  const double center = (e.p_hat + z2 / (2.0 * nn)) / denom;
  e.ci_halfwidth = kZ95 * std::sqrt(e.p_hat * (1.0 - e.p_hat) / nn + z2 / (4.0 * nn * nn)) / denom;
  e.ci_low = std::max(0.0, center - e.ci_halfwidth);
  e.ci_high = std::min(1.0, center + e.ci_halfwidth);
  return e;
}

PerEstimate mc_conditional_per(const Eigen::RowVectorXcd& hhat_k, const BeamSet& w, int k, const FlowParams& flow,
                               long n, Rng& rng) {
  if (n < 1000) throw std::invalid_argument("mc_conditional_per: n must be at least 1000");
  if (k < 0 || k >= w.w.cols()) throw std::invalid_argument("mc_conditional_per: flow index out of range");
  if (hhat_k.size() != w.w.rows()) throw std::invalid_argument("mc_conditional_per: antenna count mismatch");
  flow.validate();
  long failures = 0;
  for (long i = 0; i < n; ++i) {
    const Eigen::RowVectorXcd h = sample_channel_given_csit(rng, hhat_k, flow.eps);
    if (!rate_supported(h, w, k, flow.rate_R)) ++failures;
  }
  return wilson_estimate(failures, n);
}

// ---------------------------------------------------------------------------

DiscretizedMdp::DiscretizedMdp(const SystemConfig& cfg, std::vector<FlowParams> flows, const MdpOptions& opts,
                               Rng& rng)
    : K_(cfg.K), L_(opts.levels), S_(opts.csit_samples), flows_(std::move(flows)) {
  cfg.validate();
  validate_flows(flows_);
  if (static_cast<int>(flows_.size()) != K_) throw std::invalid_argument("DiscretizedMdp: flow count != K");
  if (cfg.Nt < K_) throw std::invalid_argument("DiscretizedMdp: zero forcing needs Nt >= K");
  if (L_ < 1 || S_ < 1 || opts.outage_draws < 1) throw std::invalid_argument("DiscretizedMdp: bad grid sizes");

  if (!opts.powers.empty()) {
    powers_ = opts.powers;
  } else {
    if (opts.power_levels < 1 || !(opts.power_min > 0.0) || !(opts.power_max >= opts.power_min))
      throw std::invalid_argument("DiscretizedMdp: bad power grid");
    powers_.push_back(0.0);
    for (int i = 0; i < opts.power_levels; ++i) {
      const double t = opts.power_levels == 1 ? 0.0 : static_cast<double>(i) / (opts.power_levels - 1);
      powers_.push_back(opts.power_min * std::pow(opts.power_max / opts.power_min, t));
    }
  }
  for (double p : powers_)
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("DiscretizedMdp: negative power level");

  const int P = static_cast<int>(powers_.size());
  num_states_ = 1;
  num_actions_ = 1;
  for (int k = 0; k < K_; ++k) {
    num_states_ *= L_ + 1;
    num_actions_ *= P;
  }

  for (const auto& f : flows_) arrival_pmf_.push_back(poisson_pmf(f.lambda / f.rate_R, L_));

  succ_.assign(static_cast<std::size_t>(S_) * num_actions_ * K_, 0.0);
  const int D = opts.outage_draws;
  for (int s = 0; s < S_; ++s) {
    Eigen::MatrixXcd hhat = complex_gaussian(rng, K_, cfg.Nt);
    for (int k = 0; k < K_; ++k) hhat.row(k) *= std::sqrt(1.0 - flows_[k].eps);
    // Zero-forcing directions: normalized columns of the pseudo-inverse.
    Eigen::MatrixXcd dirs = hhat.adjoint() * (hhat * hhat.adjoint()).inverse();
    for (int k = 0; k < K_; ++k) dirs.col(k).normalize();

    // gains[k](m, j) = |h_k^(m) d_j|^2 over frozen error draws.
    std::vector<Eigen::MatrixXd> gains(K_);
    for (int k = 0; k < K_; ++k) {
      const Eigen::MatrixXcd v = complex_gaussian(rng, D, cfg.Nt);
      Eigen::MatrixXcd h = (-std::sqrt(flows_[k].eps)) * v;
      h.rowwise() += hhat.row(k);
      gains[k] = (h * dirs).cwiseAbs2();
    }

    for (int a = 0; a < num_actions_; ++a) {
      Eigen::VectorXd p(K_);
      for (int k = 0, rest = a; k < K_; ++k, rest /= P) p(k) = powers_[rest % P];
      for (int k = 0; k < K_; ++k) {
        if (p(k) <= 0.0) continue;
        const double thr = flows_[k].sinr_threshold();
        int ok = 0;
        for (int m = 0; m < D; ++m) {
          double interference = 1.0;
          for (int j = 0; j < K_; ++j)
            if (j != k) interference += p(j) * gains[k](m, j);
          if (p(k) * gains[k](m, k) >= thr * interference) ++ok;
        }
        succ_[(static_cast<std::size_t>(s) * num_actions_ + a) * K_ + k] = static_cast<double>(ok) / D;
      }
    }
  }
}

std::vector<int> DiscretizedMdp::state_levels(int state) const {
  if (state < 0 || state >= num_states_) throw std::out_of_range("DiscretizedMdp: state index");
  std::vector<int> lv(K_);
  for (int k = 0; k < K_; ++k) {
    lv[k] = state % (L_ + 1);
    state /= L_ + 1;
  }
  return lv;
}

int DiscretizedMdp::state_index(std::span<const int> levels) const {
  if (static_cast<int>(levels.size()) != K_) throw std::invalid_argument("DiscretizedMdp: level count != K");
  int idx = 0;
  for (int k = K_ - 1; k >= 0; --k) {
    if (levels[k] < 0 || levels[k] > L_) throw std::out_of_range("DiscretizedMdp: level out of range");
    idx = idx * (L_ + 1) + levels[k];
  }
  return idx;
}

QueueState DiscretizedMdp::queue_state(int state) const {
  const auto lv = state_levels(state);
  QueueState Q{Eigen::VectorXd(K_)};
  for (int k = 0; k < K_; ++k) Q.q(k) = lv[k] * flows_[k].rate_R;
  return Q;
}

double DiscretizedMdp::action_power(int action) const {
  if (action < 0 || action >= num_actions_) throw std::out_of_range("DiscretizedMdp: action index");
  const int P = static_cast<int>(powers_.size());
  double total = 0.0;
  for (int k = 0; k < K_; ++k, action /= P) total += powers_[action % P];
  return total;
}

double DiscretizedMdp::stage_cost(int state, int action) const {
  const QueueState Q = queue_state(state);
  double cost = action_power(action);
  for (int k = 0; k < K_; ++k) cost += flows_[k].gamma * Q.q(k) / flows_[k].lambda;
  return cost;
}

double DiscretizedMdp::success_prob(int sample, int action, int k) const {
  if (sample < 0 || sample >= S_ || action < 0 || action >= num_actions_ || k < 0 || k >= K_)
    throw std::out_of_range("DiscretizedMdp: success_prob index");
  return succ_[(static_cast<std::size_t>(sample) * num_actions_ + action) * K_ + k];
}

std::vector<double> DiscretizedMdp::level_transition(int k, int level, double ps) const {
  if (k < 0 || k >= K_ || level < 0 || level > L_) throw std::out_of_range("DiscretizedMdp: level_transition");
  std::vector<double> out(static_cast<std::size_t>(L_) + 1, 0.0);
  const auto& pmf = arrival_pmf_[k];
  auto add_from = [&](int base, double weight) {
    if (weight <= 0.0) return;
    double mass = 0.0;
    for (int n = 0; base + n < L_; ++n) {
      out[base + n] += weight * pmf[n];
      mass += pmf[n];
    }
    out[L_] += weight * (1.0 - mass);
  };
  if (level == 0) {
    add_from(0, 1.0);
  } else {
    add_from(level - 1, ps);
    add_from(level, 1.0 - ps);
  }
  return out;
}

Eigen::VectorXd DiscretizedMdp::transition(int state, int sample, int action) const {
  const auto lv = state_levels(state);
  Eigen::VectorXd dist = Eigen::VectorXd::Ones(1);
  // Flow 0 is the fastest-varying index, so build the Kronecker product from the last flow down.
  for (int k = K_ - 1; k >= 0; --k) {
    const auto t = level_transition(k, lv[k], success_prob(sample, action, k));
    Eigen::VectorXd next(dist.size() * (L_ + 1));
    for (Eigen::Index i = 0; i < dist.size(); ++i)
      for (int l = 0; l <= L_; ++l) next(i * (L_ + 1) + l) = dist(i) * t[l];
    dist = std::move(next);
  }
  return dist;
}

double DiscretizedMdp::expected_drops(int state, int sample, int action) const {
  const auto lv = state_levels(state);
  double drops = 0.0;
  for (int k = 0; k < K_; ++k) {
    const double ps = lv[k] > 0 ? success_prob(sample, action, k) : 0.0;
    const auto& pmf = arrival_pmf_[k];
    const double mean = flows_[k].lambda / flows_[k].rate_R;
    auto overflow = [&](int base) {
      // E[max(base + A - L, 0)] = E[A] - sum_{n < L - base} n pmf - (L - base) P(A >= L - base)
      const int room = L_ - base;
      double below = 0.0;
      double mass = 0.0;
      for (int n = 0; n < room; ++n) {
        below += n * pmf[n];
        mass += pmf[n];
      }
      return mean - below - room * (1.0 - mass);
    };
    if (lv[k] == 0)
      drops += overflow(0);
    else
      drops += ps * overflow(lv[k] - 1) + (1.0 - ps) * overflow(lv[k]);
  }
  return drops;
}

// ---------------------------------------------------------------------------

RviResult relative_value_iteration(const DiscretizedMdp& mdp, double tol, int max_sweeps, int ref_state) {
  const int N = mdp.num_states();
  const int S = mdp.num_samples();
  const int A = mdp.num_actions();
  const int K = mdp.K();
  const int L = mdp.levels();
  if (ref_state < 0 || ref_state >= N) throw std::out_of_range("relative_value_iteration: reference state");
  if (!(tol > 0.0) || max_sweeps < 1) throw std::invalid_argument("relative_value_iteration: bad tolerance");

  std::vector<std::vector<int>> levels(N);
  std::vector<double> queue_cost(N, 0.0);
  for (int i = 0; i < N; ++i) {
    levels[i] = mdp.state_levels(i);
    const QueueState Q = mdp.queue_state(i);
    for (int k = 0; k < K; ++k) queue_cost[i] += mdp.flows()[k].gamma * Q.q(k) / mdp.flows()[k].lambda;
  }
  std::vector<double> power(A);
  for (int a = 0; a < A; ++a) power[a] = mdp.action_power(a);

  // Arrival kernels: arrive[k] maps a post-service level to the next level distribution.
  std::vector<std::vector<std::vector<double>>> arrive(K);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l <= L; ++l) arrive[k].push_back(mdp.level_transition(k, l, 0.0));

  // U(post-service state) = E[V(next)], computed one flow at a time.
  auto post_service_values = [&](const Eigen::VectorXd& V) {
    Eigen::VectorXd U = V;
    int stride = 1;
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXd next = Eigen::VectorXd::Zero(N);
      for (int i = 0; i < N; ++i) {
        const int l = levels[i][k];
        const int base = i - l * stride;
        double acc = 0.0;
        for (int m = 0; m <= L; ++m) acc += arrive[k][l][m] * U(base + m * stride);
        next(i) = acc;
      }
      U = std::move(next);
      stride *= L + 1;
    }
    return U;
  };

  std::vector<int> strides(K);
  for (int k = 0, s = 1; k < K; ++k, s *= L + 1) strides[k] = s;
  const int outcomes = 1 << K;

  RviResult res;
  res.V = Eigen::VectorXd::Zero(N);
  res.policy.assign(static_cast<std::size_t>(N) * S, 0);
  Eigen::VectorXd TV(N);
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    const Eigen::VectorXd U = post_service_values(res.V);
    for (int i = 0; i < N; ++i) {
      double acc = 0.0;
      for (int s = 0; s < S; ++s) {
        double best = std::numeric_limits<double>::infinity();
        int best_a = 0;
        for (int a = 0; a < A; ++a) {
          double ev = 0.0;
          for (int o = 0; o < outcomes; ++o) {
            double prob = 1.0;
            int target = i;
            for (int k = 0; k < K; ++k) {
              const bool served = (o >> k) & 1;
              const double ps = levels[i][k] > 0 ? mdp.success_prob(s, a, k) : 0.0;
              prob *= served ? ps : 1.0 - ps;
              if (served) target -= strides[k];
            }
            if (prob > 0.0) ev += prob * U(target);
          }
          const double q = power[a] + ev;
          if (q < best) {
            best = q;
            best_a = a;
          }
        }
        acc += best;
        res.policy[static_cast<std::size_t>(i) * S + s] = best_a;
      }
      TV(i) = queue_cost[i] + acc / S;
    }
    res.theta = TV(ref_state);
    const Eigen::VectorXd Vn = TV.array() - res.theta;
    const Eigen::VectorXd diff = Vn - res.V;
    res.span = diff.maxCoeff() - diff.minCoeff();
    res.V = Vn;
    res.sweeps = sweep;
    if (res.span < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

ValueComparison compare_value_functions(const DiscretizedMdp& mdp, const Eigen::VectorXd& V,
                                        const ApproxValue& approx) {
  if (V.size() != mdp.num_states()) throw std::invalid_argument("compare_value_functions: table size");
  if (approx.size() != mdp.K()) throw std::invalid_argument("compare_value_functions: flow count");
  if (mdp.levels() < 3) throw std::invalid_argument("compare_value_functions: need at least two interior levels");
  const double v_ref = V(0);
  const double a_ref = approx.value(mdp.queue_state(0));
  ValueComparison cmp;
  for (int i = 0; i < mdp.num_states(); ++i) {
    const auto lv = mdp.state_levels(i);
    if (std::any_of(lv.begin(), lv.end(), [&](int l) { return l == 0 || l == mdp.levels(); })) continue;
    const QueueState Q = mdp.queue_state(i);
    cmp.levels.push_back(lv);
    cmp.norm_q.push_back(Q.q.norm());
    cmp.v_oracle.push_back(V(i) - v_ref);
    cmp.v_approx.push_back(approx.value(Q) - a_ref);
  }
  cmp.spearman = spearman(cmp.v_oracle, cmp.v_approx);
  for (std::size_t i = 0; i < cmp.v_oracle.size(); ++i) {
    const double ref = std::max(std::abs(cmp.v_oracle[i]), 1e-12);
    cmp.max_rel_deviation = std::max(cmp.max_rel_deviation, std::abs(cmp.v_approx[i] - cmp.v_oracle[i]) / ref);
  }
  return cmp;
}

void write_value_csv(const ValueComparison& cmp, std::ostream& os) {
  os << "point";
  if (!cmp.levels.empty())
    for (std::size_t k = 0; k < cmp.levels.front().size(); ++k) os << ",level_" << k;
  os << ",norm_q,v_oracle,v_approx\n";
  for (std::size_t i = 0; i < cmp.v_oracle.size(); ++i) {
    os << i;
    for (int l : cmp.levels[i]) os << ',' << l;
    os << ',' << cmp.norm_q[i] << ',' << cmp.v_oracle[i] << ',' << cmp.v_approx[i] << '\n';
  }
}

// ---------------------------------------------------------------------------

double bernstein_constraint_value(const Eigen::RowVectorXcd& hhat_k, std::span<const Eigen::MatrixXcd> W, int k,
                                  double delta, double x, double y, double rate_R, double eps,
                                  bool mirror_negative_delta) {
  if (delta < 0.0 && !mirror_negative_delta) throw std::domain_error("bernstein_constraint_value: delta < 0");
  const QuadFormTriple t = quadform_from_gram(hhat_k, W, k, rate_R, eps);
  const double root = std::copysign(std::sqrt(2.0 * std::abs(delta)), delta);
  return t.e - t.M.trace().real() + root * x + delta * y;
}

ConvexityReport convexity_probe(long n_pairs, Rng& rng, const ConvexityOptions& opts) {
  if (n_pairs < 1 || opts.K < 1 || opts.Nt < 1) throw std::invalid_argument("convexity_probe: bad sizes");
  if (!(opts.eps >= 0.0 && opts.eps < 1.0)) throw std::invalid_argument("convexity_probe: eps out of range");
  constexpr double kDeltaScale = 5.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ConvexityReport rep;
  rep.pairs = n_pairs;

  struct Point {
    std::vector<Eigen::MatrixXcd> W;
    double delta;
    Eigen::VectorXd x, y;
  };
  for (long pair = 0; pair < n_pairs; ++pair) {
    Eigen::MatrixXcd hhat = complex_gaussian(rng, opts.K, opts.Nt, 1.0 - opts.eps);
    auto draw = [&]() {
      Point p;
      for (int j = 0; j < opts.K; ++j) p.W.push_back(random_gram(rng, opts.Nt));
      p.delta = opts.mirror_negative_delta ? kDeltaScale * (2.0 * unit(rng) - 1.0) : kDeltaScale * unit(rng);
      p.x.resize(opts.K);
      p.y.resize(opts.K);
      for (int k = 0; k < opts.K; ++k) {
        const QuadFormTriple t = quadform_from_gram(hhat.row(k), p.W, k, opts.rate_R, opts.eps);
        p.x(k) = soc_norm(t.M, t.z) + unit(rng);
        p.y(k) = s_plus(t.M) + unit(rng);
      }
      return p;
    };
    const Point a = draw();
    const Point b = draw();
    Point mid;
    for (int j = 0; j < opts.K; ++j) mid.W.push_back(0.5 * (a.W[j] + b.W[j]));
    mid.delta = 0.5 * (a.delta + b.delta);
    mid.x = 0.5 * (a.x + b.x);
    mid.y = 0.5 * (a.y + b.y);

    bool pair_violates = false;
    bool pair_infeasible = false;
    for (int k = 0; k < opts.K; ++k) {
      ++rep.checks;
      auto f = [&](const Point& p) {
        return bernstein_constraint_value(hhat.row(k), p.W, k, p.delta, p.x(k), p.y(k), opts.rate_R, opts.eps,
                                          opts.mirror_negative_delta);
      };
      const double excess = f(mid) - 0.5 * (f(a) + f(b));
      if (excess > opts.tol) {
        pair_violates = true;
        rep.max_violation = std::max(rep.max_violation, excess);
      }
      const QuadFormTriple t = quadform_from_gram(hhat.row(k), mid.W, k, opts.rate_R, opts.eps);
      const double psd_gap = -Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(mid.W[k]).eigenvalues().minCoeff();
      if (soc_norm(t.M, t.z) > mid.x(k) + opts.tol || s_plus(t.M) > mid.y(k) + opts.tol || psd_gap > opts.tol)
        pair_infeasible = true;
    }
    if (pair_violates) ++rep.violations;
    if (pair_infeasible) ++rep.feasibility_violations;
  }
  return rep;
}

// ---------------------------------------------------------------------------

double decoupled_threshold_policy(const Eigen::RowVectorXcd& h_k, const Eigen::VectorXcd& direction, double y,
                                  const FlowParams& flow) {
  if (h_k.size() != direction.size()) throw std::invalid_argument("decoupled_threshold_policy: size mismatch");
  if (y <= 0.0) return 0.0;
  const double gain = std::norm((h_k * direction)(0));
  const double a = flow.sinr_threshold();
  if (gain <= a / (y * flow.rate_R)) return 0.0;
  return a / gain;
}

ThresholdStats simulate_threshold_policy(double y, const FlowParams& flow, int Nt, long n, Rng& rng) {
  if (!(y > 0.0) || Nt < 1 || n < 2) throw std::invalid_argument("simulate_threshold_policy: bad arguments");
  flow.validate();
  const double a = flow.sinr_threshold();
  const double thr = a / (y * flow.rate_R);
  Eigen::VectorXcd dir = Eigen::VectorXcd::Zero(Nt);
  dir(0) = 1.0;
  double sp = 0.0, sp2 = 0.0;
  long hits = 0;
  for (long i = 0; i < n; ++i) {
    const Eigen::RowVectorXcd h = complex_gaussian(rng, 1, Nt);
    const double p = decoupled_threshold_policy(h, dir, y, flow);
    sp += p;
    sp2 += p * p;
    if (p > 0.0) ++hits;
  }
  ThresholdStats st;
  st.n = n;
  const double nn = static_cast<double>(n);
  st.mean_power = sp / nn;
  st.power_stderr = std::sqrt(std::max(sp2 / nn - st.mean_power * st.mean_power, 0.0) / (nn - 1.0));
  st.success = static_cast<double>(hits) / nn;
  st.success_stderr = std::sqrt(st.success * (1.0 - st.success) / nn);
  st.closed_power = a * exp_integral_e1(thr);
  st.closed_success = std::exp(-thr);
  return st;
}

}  // namespace dcbf
