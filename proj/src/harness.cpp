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

#include "dcbf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "dcbf/oracles.hpp"

namespace dcbf {

namespace {

using Clock = std::chrono::steady_clock;
using Deadline = std::optional<Clock::time_point>;

bool past(const Deadline& d) { return d && Clock::now() > *d; }

// Run fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

std::vector<FlowParams> scaled_flows(const ExperimentConfig& ec, const SchemeKnob& knob) {
  std::vector<FlowParams> flows = ec.flows;
  if (std::holds_alternative<Proposed>(knob.policy))
    for (auto& f : flows) f.gamma *= knob.gamma_scale;
  return flows;
}

// Positive scalar that raises the scheme's average power when increased.
double get_knob(const SchemeKnob& k) {
  if (std::holds_alternative<Proposed>(k.policy)) return k.gamma_scale;
  if (const auto* c = std::get_if<CsitAdaptivePer>(&k.policy)) return c->beta;
  if (const auto* f = std::get_if<FixedPer>(&k.policy)) return -std::log(f->rho0);
  return std::get<RandomBeam>(k.policy).total_power;
}

void set_knob(SchemeKnob& k, double v) {
  if (std::holds_alternative<Proposed>(k.policy))
    k.gamma_scale = v;
  else if (auto* c = std::get_if<CsitAdaptivePer>(&k.policy))
    c->beta = v;
  else if (auto* f = std::get_if<FixedPer>(&k.policy))
    f->rho0 = std::exp(-std::min(v, kDeltaCap));
  else
    std::get<RandomBeam>(k.policy).total_power = v;
}

ExperimentConfig pilot_config(const ExperimentConfig& ec) {
  ExperimentConfig p = ec;
  p.horizon = ec.pilot_horizon;
  p.warmup = std::min(ec.warmup, ec.pilot_horizon / 4);
  return p;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::None: return "none";
    case SweepAxis::Gamma: return "gamma";
    case SweepAxis::Lambda: return "lambda";
    case SweepAxis::K: return "K";
    case SweepAxis::Power: return "power";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  cfg.validate();
  if (static_cast<int>(flows.size()) != cfg.K) throw std::invalid_argument("flows: count must equal K");
  validate_flows(flows);
  if (schemes.empty()) throw std::invalid_argument("schemes: need at least one");
  for (const auto& s : schemes) validate_policy(s);
  if (horizon < 1 || warmup < 0 || warmup >= horizon)
    throw std::invalid_argument("horizon/warmup: need horizon > warmup >= 0");
  if (seeds.empty()) throw std::invalid_argument("seeds: need at least one");
  if (axis != SweepAxis::None && axis_values.empty()) throw std::invalid_argument("values: axis without values");
  for (double v : axis_values) {
    if (!std::isfinite(v)) throw std::invalid_argument("values: must be finite");
    if (axis == SweepAxis::K && (v < 1.0 || v != std::floor(v))) throw std::invalid_argument("values: K must be a positive integer");
    if ((axis == SweepAxis::Gamma || axis == SweepAxis::Power) && !(v > 0.0))
      throw std::invalid_argument("values: must be > 0");
  }
  if (match_power && (pilot_horizon < 4 || !(match_tol > 0.0)))
    throw std::invalid_argument("pilot_horizon: must be >= 4 when matching power");
}

Eigen::VectorXd TrialMetrics::per_rate() const {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(failures.size());
  for (Eigen::Index k = 0; k < r.size(); ++k)
    if (attempts(k) > 0) r(k) = failures(k) / attempts(k);
  return r;
}

Eigen::VectorXd TrialMetrics::mean_target() const {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(target_sum.size());
  for (Eigen::Index k = 0; k < r.size(); ++k)
    if (attempts(k) > 0) r(k) = target_sum(k) / attempts(k);
  return r;
}

double TrialMetrics::aggregate_per() const {
  const double n = attempts.sum();
  return n > 0 ? failures.sum() / n : 0.0;
}

double TrialMetrics::aggregate_target() const {
  const double n = attempts.sum();
  return n > 0 ? target_sum.sum() / n : 0.0;
}

double TrialMetrics::mean_delay_slots() const { return avg_delay_slots.mean(); }
double TrialMetrics::mean_delay_pcks() const { return avg_queue_pcks.mean(); }

TrialMetrics run_trial(const ExperimentConfig& ec, const SchemeKnob& knob, std::uint64_t seed, Deadline deadline) {
  ec.validate();
  validate_policy(knob.policy);
  const int K = ec.cfg.K;
  const std::vector<FlowParams> flows = scaled_flows(ec, knob);
  const ControllerContext ctx(ec.cfg, flows);
  TrialStreams streams = TrialStreams::from_seed(seed);

  TrialMetrics m;
  Eigen::VectorXd queue_sum = Eigen::VectorXd::Zero(K);
  double power_sum = 0.0;
  double time_sum = 0.0;
  long decisions = 0;
  m.attempts = m.failures = m.target_sum = Eigen::VectorXd::Zero(K);

  QueueState Q{Eigen::VectorXd::Zero(K)};
  for (long t = 0; t < ec.horizon; ++t) {
    if ((t & 63) == 0 && past(deadline)) throw BudgetExceeded("run_trial: time budget exceeded");
    const auto [H, Hhat] = sample_joint_channel_csit(streams.channel, streams.csit_noise, ec.cfg, flows);
    const bool record = t >= ec.warmup;

    // Flows with an empty queue are not scheduled; with every queue empty there is nothing to decide.
    Decision d;
    if ((Q.q.array() > 0.0).any()) {
      const auto t0 = Clock::now();
      try {
        d = decide(knob.policy, Hhat, Q, ctx, streams.policy);
      } catch (const std::exception&) {
        d.beams = BeamSet::zeros(ec.cfg.Nt, K);
        d.per_targets = Eigen::VectorXd::Ones(K);
        d.diag.failed = true;
      }
      time_sum += std::chrono::duration<double>(Clock::now() - t0).count();
      ++decisions;
      for (int k = 0; k < K; ++k)
        if (Q.q(k) <= 0.0) d.beams.w.col(k).setZero();
    } else {
      d.beams = BeamSet::zeros(ec.cfg.Nt, K);
      d.per_targets = Eigen::VectorXd::Ones(K);
    }

    const Eigen::VectorXd G = goodput(H, d.beams, flows);
    const Eigen::VectorXd p = d.beams.power();
    if (record) {
      power_sum += p.sum();
      queue_sum += Q.q;
      if (d.diag.failed) ++m.failed_decisions;
      if (d.diag.degraded) ++m.degraded_decisions;
      for (int k = 0; k < K; ++k) {
        if (p(k) <= 0.0) continue;
        m.attempts(k) += 1.0;
        if (G(k) <= 0.0) m.failures(k) += 1.0;
        m.target_sum(k) += d.per_targets(k);
      }
    }
    const Eigen::VectorXd A = sample_arrivals(streams.arrivals, flows);
    Q = queue_update(Q, G, A);
  }

  m.slots = ec.horizon - ec.warmup;
  const double n = static_cast<double>(m.slots);
  m.avg_power = power_sum / n;
  m.avg_queue = queue_sum / n;
  m.avg_queue_bits = m.avg_queue * (ec.cfg.tau * ec.cfg.bw);
  m.avg_queue_pcks.resize(K);
  m.avg_delay_slots.resize(K);
  for (int k = 0; k < K; ++k) {
    m.avg_queue_pcks(k) = m.avg_queue(k) / flows[k].rate_R;
    m.avg_delay_slots(k) = m.avg_queue(k) / flows[k].lambda;
  }
  m.decision_time = decisions > 0 ? time_sum / static_cast<double>(decisions) : 0.0;
  return m;
}

TrialMetrics run_trial(const ExperimentConfig& ec, std::uint64_t seed) {
  ec.validate();
  return run_trial(ec, SchemeKnob{ec.schemes.front()}, seed);
}

void write_csv_header(std::ostream& os) {
  os << "# dcbf csv v" << kCsvVersion << '\n'
     << "scheme,K,Nt,eps,gamma_or_beta,lambda,axis_value,avg_power,avg_delay_slots,avg_delay_pcks,per_rate,"
        "per_target,decision_ms,failed_decisions,seed\n";
}

void write_csv_row(std::ostream& os, const CsvRow& r) {
  os << r.scheme << ',' << r.K << ',' << r.Nt << ',' << fmt(r.eps) << ',' << fmt(r.gamma_or_beta) << ','
     << fmt(r.lambda) << ',' << fmt(r.axis_value) << ',' << fmt(r.avg_power) << ',' << fmt(r.avg_delay_slots) << ','
     << fmt(r.avg_delay_pcks) << ',' << fmt(r.per_rate) << ',' << fmt(r.per_target) << ',';
  if (r.decision_ms) os << fmt(*r.decision_ms);
  os << ',' << r.failed_decisions << ',' << r.seed << '\n';
}

ExperimentConfig apply_axis(const ExperimentConfig& ec, double value) {
  ExperimentConfig out = ec;
  switch (ec.axis) {
    case SweepAxis::None:
      break;
    case SweepAxis::Gamma:
      for (auto& f : out.flows) f.gamma = value;
      break;
    case SweepAxis::Lambda:
      for (auto& f : out.flows) f.lambda = value;
      break;
    case SweepAxis::K:
      out.cfg.K = static_cast<int>(value);
      out.cfg.Nt = std::max(out.cfg.Nt, out.cfg.K);
      out.flows.resize(static_cast<std::size_t>(out.cfg.K), ec.flows.front());
      break;
    case SweepAxis::Power:
      for (auto& s : out.schemes)
        if (auto* rb = std::get_if<RandomBeam>(&s)) rb->total_power = value;
      break;
  }
  out.axis = SweepAxis::None;
  out.axis_values.clear();
  return out;
}

double knob_value(const ExperimentConfig& ec, const SchemeKnob& knob) {
  if (std::holds_alternative<Proposed>(knob.policy)) return ec.flows.front().gamma * knob.gamma_scale;
  if (const auto* c = std::get_if<CsitAdaptivePer>(&knob.policy)) return c->beta;
  if (const auto* f = std::get_if<FixedPer>(&knob.policy)) return f->rho0;
  return std::get<RandomBeam>(knob.policy).total_power;
}

double anchor_power(const ExperimentConfig& ec) {
  PolicyKind anchor = FixedPer{};
  for (const auto& s : ec.schemes)
    if (std::holds_alternative<FixedPer>(s)) anchor = s;
  return run_trial(pilot_config(ec), SchemeKnob{anchor}, ec.pilot_seed).avg_power;
}

Calibration calibrate_power(const ExperimentConfig& ec, const PolicyKind& scheme, double target_power,
                            Deadline deadline) {
  if (!(target_power > 0.0)) throw std::invalid_argument("calibrate_power: target must be > 0");
  const ExperimentConfig pilot = pilot_config(ec);
  Calibration cal;
  cal.knob.policy = scheme;
  cal.target_power = target_power;
  auto power_at = [&](double v) {
    SchemeKnob k = cal.knob;
    set_knob(k, v);
    return run_trial(pilot, k, ec.pilot_seed, deadline).avg_power;
  };
  auto close = [&](double p) { return std::abs(p / target_power - 1.0) <= ec.match_tol; };

  // Bracket in log space by factors of 4, then bisect.
  double lo = get_knob(cal.knob);
  double p_lo = power_at(lo);
  double best = lo, best_p = p_lo;
  auto keep = [&](double v, double p) {
    if (std::abs(p - target_power) < std::abs(best_p - target_power)) best = v, best_p = p;
  };
  double hi = lo, p_hi = p_lo;
  const bool go_up = p_lo < target_power;
  for (int i = 0; i < 10 && !close(best_p); ++i) {
    const double v = go_up ? hi * 4.0 : lo / 4.0;
    const double p = power_at(v);
    keep(v, p);
    if (go_up) {
      lo = hi, p_lo = p_hi;
      hi = v, p_hi = p;
      if (p >= target_power) break;
    } else {
      hi = lo, p_hi = p_lo;
      lo = v, p_lo = p;
      if (p <= target_power) break;
    }
  }
  if (p_lo <= target_power && p_hi >= target_power)
    for (int i = 0; i < 14 && !close(best_p); ++i) {
      const double mid = std::sqrt(lo * hi);
      const double p = power_at(mid);
      keep(mid, p);
      if (p < target_power)
        lo = mid;
      else
        hi = mid;
    }
  set_knob(cal.knob, best);
  cal.pilot_power = best_p;
  cal.matched = close(best_p);
  return cal;
}

int worker_count_from_env() {
  if (const char* env = std::getenv("DCBF_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

SweepResult run_sweep(const ExperimentConfig& ec, const SweepOptions& opts) {
  ec.validate();
  const int workers = opts.workers > 0 ? opts.workers : worker_count_from_env();
  std::vector<double> values = ec.axis_values;
  if (ec.axis == SweepAxis::None || values.empty()) values = {0.0};
  std::vector<ExperimentConfig> points;
  for (double v : values) points.push_back(apply_axis(ec, v));
  const std::size_t P = points.size();
  const std::size_t S = ec.schemes.size();
  const std::size_t N = ec.seeds.size();

  SweepResult res;
  std::mutex mu;
  auto note_error = [&](const std::string& what) {
    std::lock_guard<std::mutex> lock(mu);
    res.errors.push_back(what);
  };

  std::vector<SchemeKnob> knobs(P * S);
  std::vector<bool> point_ok(P, true);
  for (std::size_t i = 0; i < P * S; ++i) knobs[i].policy = points[i / S].schemes[i % S];

  if (ec.match_power) {
    std::vector<double> target(P, 0.0);
    parallel_for(P, workers, [&](std::size_t i) {
      if (ec.axis == SweepAxis::Power) {
        target[i] = values[i];
        return;
      }
      try {
        target[i] = anchor_power(points[i]);
        if (!(target[i] > 0.0)) throw std::runtime_error("anchor scheme used no power");
      } catch (const std::exception& e) {
        point_ok[i] = false;
        note_error("point " + std::to_string(i) + " anchor: " + e.what());
      }
    });
    res.calibrations.resize(P * S);
    parallel_for(P * S, workers, [&](std::size_t i) {
      const std::size_t pt = i / S;
      if (!point_ok[pt] || past(opts.deadline)) return;
      try {
        res.calibrations[i] = calibrate_power(points[pt], points[pt].schemes[i % S], target[pt], opts.deadline);
        knobs[i] = res.calibrations[i].knob;
      } catch (const BudgetExceeded&) {
      } catch (const std::exception& e) {
        note_error("point " + std::to_string(pt) + " calibrate " + policy_name(knobs[i].policy) + ": " + e.what());
      }
    });
    if (past(opts.deadline)) res.budget_exceeded = true;
  }

  // Trials, emitted in (point, scheme, seed) order through one writer.
  const std::size_t T = P * S * N;
  std::vector<std::optional<CsvRow>> rows(T);
  std::vector<bool> done(T, false);
  std::size_t next_emit = 0;
  auto finish = [&](std::size_t i, std::optional<CsvRow> row) {
    std::lock_guard<std::mutex> lock(mu);
    rows[i] = std::move(row);
    done[i] = true;
    for (; next_emit < T && done[next_emit]; ++next_emit)
      if (rows[next_emit] && opts.on_row) opts.on_row(*rows[next_emit]);
  };
  std::atomic<bool> budget_hit{res.budget_exceeded};
  parallel_for(T, workers, [&](std::size_t i) {
    const std::size_t pt = i / (S * N);
    const std::size_t sc = (i / N) % S;
    const std::uint64_t seed = ec.seeds[i % N];
    if (!point_ok[pt] || budget_hit || past(opts.deadline)) {
      if (point_ok[pt]) budget_hit = true;
      finish(i, std::nullopt);
      return;
    }
    const ExperimentConfig& pc = points[pt];
    const SchemeKnob& knob = knobs[pt * S + sc];
    try {
      const TrialMetrics m = run_trial(pc, knob, seed, opts.deadline);
      CsvRow r;
      r.scheme = policy_name(knob.policy);
      r.K = pc.cfg.K;
      r.Nt = pc.cfg.Nt;
      r.eps = pc.flows.front().eps;
      r.gamma_or_beta = knob_value(pc, knob);
      r.lambda = pc.flows.front().lambda;
      r.axis_value = values[pt];
      r.avg_power = m.avg_power;
      r.avg_delay_slots = m.mean_delay_slots();
      r.avg_delay_pcks = m.mean_delay_pcks();
      r.per_rate = m.aggregate_per();
      r.per_target = m.aggregate_target();
      if (ec.record_timing) r.decision_ms = 1e3 * m.decision_time;
      r.failed_decisions = m.failed_decisions;
      r.seed = seed;
      finish(i, r);
    } catch (const BudgetExceeded&) {
      budget_hit = true;
      finish(i, std::nullopt);
    } catch (const std::exception& e) {
      note_error("point " + std::to_string(pt) + " " + policy_name(knob.policy) + " seed " + std::to_string(seed) +
                 ": " + e.what());
      finish(i, std::nullopt);
    }
  });
  res.budget_exceeded = budget_hit;
  for (auto& r : rows)
    if (r) res.rows.push_back(std::move(*r));
  return res;
}

double BenchReport::ratio(int K, const std::string& a, const std::string& b) const {
  const BenchRow* ra = find(K, a);
  const BenchRow* rb = find(K, b);
  if (!ra || !rb || rb->mean_ms <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return ra->mean_ms / rb->mean_ms;
}

const BenchRow* BenchReport::find(int K, const std::string& scheme) const {
  for (const auto& r : rows)
    if (r.K == K && r.scheme == scheme) return &r;
  return nullptr;
}

BenchReport bench_decision_time(const std::vector<int>& Ks, int Nt, const std::vector<PolicyKind>& schemes,
                                const FlowParams& flow, int states, std::uint64_t seed, bool time_oracle) {
  if (Ks.empty() || states < 1) throw std::invalid_argument("bench_decision_time: need K values and states");
  BenchReport rep;
  for (int K : Ks) {
    SystemConfig cfg;
    cfg.K = K;
    cfg.Nt = std::max(Nt, K);
    const std::vector<FlowParams> flows(static_cast<std::size_t>(K), flow);
    const ControllerContext ctx(cfg, flows);
    TrialStreams streams = TrialStreams::from_seed(seed + static_cast<std::uint64_t>(K));
    std::vector<CsitRealization> hhat;
    std::vector<QueueState> Q;
    std::uniform_int_distribution<int> level(1, 10);
    for (int s = 0; s < states; ++s) {
      hhat.push_back(sample_joint_channel_csit(streams.channel, streams.csit_noise, cfg, flows).second);
      QueueState q{Eigen::VectorXd(K)};
      for (int k = 0; k < K; ++k) q.q(k) = level(streams.arrivals) * flow.rate_R;
      Q.push_back(q);
    }
    for (const auto& scheme : schemes) {
      BenchRow row;
      row.K = K;
      row.scheme = policy_name(scheme);
      row.states = states;
      Rng rng = derive_stream(seed, 99);
      double total = 0.0;
      for (int s = 0; s < states; ++s) {
        const auto t0 = Clock::now();
        const Decision d = decide(scheme, hhat[s], Q[s], ctx, rng);
        const double ms = 1e3 * std::chrono::duration<double>(Clock::now() - t0).count();
        total += ms;
        row.max_ms = std::max(row.max_ms, ms);
      }
      row.mean_ms = total / states;
      rep.rows.push_back(row);
    }
  }
  const int kmin = *std::min_element(Ks.begin(), Ks.end());
  if (time_oracle && kmin <= 2) {
    SystemConfig cfg;
    cfg.K = kmin;
    cfg.Nt = std::max(Nt, kmin);
    Rng rng = derive_stream(seed, 77);
    const auto t0 = Clock::now();
    const DiscretizedMdp mdp(cfg, std::vector<FlowParams>(static_cast<std::size_t>(kmin), flow), MdpOptions{}, rng);
    const RviResult r = relative_value_iteration(mdp);
    rep.oracle_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    rep.oracle_K = kmin;
    if (!r.converged) throw std::runtime_error("bench_decision_time: value iteration did not converge");
  }
  return rep;
}

void write_bench(const BenchReport& rep, std::ostream& os) {
  os << "K,scheme,states,mean_ms,max_ms\n";
  for (const auto& r : rep.rows)
    os << r.K << ',' << r.scheme << ',' << r.states << ',' << fmt(r.mean_ms) << ',' << fmt(r.max_ms) << '\n';
  if (rep.oracle_K > 0) os << "# value iteration oracle K=" << rep.oracle_K << ": " << fmt(rep.oracle_seconds) << " s\n";
  std::vector<int> Ks;
  for (const auto& r : rep.rows)
    if (std::find(Ks.begin(), Ks.end(), r.K) == Ks.end()) Ks.push_back(r.K);
  for (int K : Ks) {
    os << "# K=" << K << " proposed/capb " << fmt(rep.ratio(K, "proposed", "capb")) << ", proposed/fpb "
       << fmt(rep.ratio(K, "proposed", "fpb"));
    if (rep.oracle_K == K)
      if (const BenchRow* p = rep.find(K, "proposed"); p && p->mean_ms > 0.0)
        os << ", oracle/proposed " << fmt(1e3 * rep.oracle_seconds / p->mean_ms);
    os << '\n';
  }
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace dcbf
