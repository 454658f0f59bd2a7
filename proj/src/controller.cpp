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

#include "dcbf/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace dcbf {

std::string policy_name(const PolicyKind& kind) {
  struct V {
    std::string operator()(const Proposed&) const { return "proposed"; }
    std::string operator()(const RandomBeam&) const { return "rb"; }
    std::string operator()(const FixedPer&) const { return "fpb"; }
    std::string operator()(const CsitAdaptivePer&) const { return "capb"; }
  };
  return std::visit(V{}, kind);
}

void validate_policy(const PolicyKind& kind) {
  if (const auto* rb = std::get_if<RandomBeam>(&kind); rb && !(rb->total_power > 0.0))
    throw std::invalid_argument("RandomBeam: total_power must be > 0");
  if (const auto* fp = std::get_if<FixedPer>(&kind); fp && !(fp->rho0 > 0.0 && fp->rho0 < 1.0))
    throw std::invalid_argument("FixedPer: rho0 must lie in (0, 1)");
  if (const auto* ca = std::get_if<CsitAdaptivePer>(&kind); ca && !(ca->beta > 0.0))
    throw std::invalid_argument("CsitAdaptivePer: beta must be > 0");
}

Eigen::MatrixXcd Step2Layout::basis(int t) const {
  Eigen::MatrixXcd E = Eigen::MatrixXcd::Zero(Nt_, Nt_);
  if (t < Nt_) {
    E(t, t) = 1.0;
    return E;
  }
  int p = (t - Nt_) / 2;
  const bool imag = ((t - Nt_) % 2) == 1;
  for (int j = 0; j < Nt_; ++j)
    for (int i = j + 1; i < Nt_; ++i) {
      if (p-- != 0) continue;
      if (imag) {
        E(i, j) = cplx(0.0, 1.0);
        E(j, i) = cplx(0.0, -1.0);
      } else {
        E(i, j) = 1.0;
        E(j, i) = 1.0;
      }
      return E;
    }
  throw std::out_of_range("Step2Layout::basis: index out of range");
}

Eigen::MatrixXcd Step2Layout::gram(const Eigen::VectorXd& vars, int k) const {
  const int off = w_offset(k);
  Eigen::MatrixXcd W(Nt_, Nt_);
  for (int i = 0; i < Nt_; ++i) W(i, i) = vars(off + i);
  int idx = off + Nt_;
  for (int j = 0; j < Nt_; ++j)
    for (int i = j + 1; i < Nt_; ++i) {
      const cplx v(vars(idx), vars(idx + 1));
      W(i, j) = v;
      W(j, i) = std::conj(v);
      idx += 2;
    }
  return W;
}

Eigen::VectorXd Step2Layout::params(const Eigen::MatrixXcd& W) const {
  Eigen::VectorXd p(Nt_ * Nt_);
  for (int i = 0; i < Nt_; ++i) p(i) = W(i, i).real();
  int idx = Nt_;
  for (int j = 0; j < Nt_; ++j)
    for (int i = j + 1; i < Nt_; ++i) {
      p(idx++) = W(i, j).real();
      p(idx++) = W(i, j).imag();
    }
  return p;
}

Step2Program build_step2_program(const CsitRealization& hhat, std::span<const double> delta,
                                 std::span<const FlowParams> flows, const SystemConfig& cfg) {
  cfg.validate();
  const int K = cfg.K;
  const int Nt = cfg.Nt;
  if (static_cast<int>(flows.size()) != K || static_cast<int>(delta.size()) != K)
    throw std::invalid_argument("build_step2_program: need K flows and K deltas");
  if (hhat.hhat.rows() != K || hhat.hhat.cols() != Nt)
    throw std::invalid_argument("build_step2_program: CSIT must be K x Nt");
  for (double d : delta)
    if (!(d >= 0.0)) throw std::invalid_argument("build_step2_program: delta must be >= 0");

  Step2Layout L(K, Nt);
  const int n = L.num_vars();
  const int nb = Nt * Nt;
  const int soc_dim = 1 + nb + 2 * Nt;
  const int rows_per_flow = 1 + soc_dim + 2 * nb + 1;
  const int m = K * rows_per_flow;

  std::vector<Eigen::MatrixXcd> E(static_cast<std::size_t>(nb));
  std::vector<Eigen::VectorXd> E_h(static_cast<std::size_t>(nb));
  for (int t = 0; t < nb; ++t) {
    E[static_cast<std::size_t>(t)] = L.basis(t);
    E_h[static_cast<std::size_t>(t)] = hvec(E[static_cast<std::size_t>(t)]);
  }
  const Eigen::VectorXd I_h = hvec(Eigen::MatrixXcd::Identity(Nt, Nt));

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  Step2Program prog{{}, L, {}};
  ConeSpec& cones = prog.problem.cones;

  for (int k = 0; k < K; ++k)
    for (int t = 0; t < Nt; ++t) c(L.w_offset(k) + t) = 1.0;

  for (int k = 0; k < K; ++k) {
    const auto& f = flows[static_cast<std::size_t>(k)];
    const double a = std::exp2(f.rate_R) - 1.0;
    const double eps = f.eps;
    const double se = std::sqrt(eps);
    const double d = delta[static_cast<std::size_t>(k)];
    const Eigen::RowVectorXcd hk = hhat.hhat.row(k);
    const Eigen::VectorXcd hk_h = hk.adjoint();

    const int r_margin = k * rows_per_flow;
    const int r_soc = r_margin + 1;
    const int r_psd_m = r_soc + soc_dim;
    const int r_psd_w = r_psd_m + nb;
    const int r_y = r_psd_w + nb;
    prog.margin_row.push_back(r_margin);
    cones.nonneg(1).soc(soc_dim).hpsd(Nt).hpsd(Nt).nonneg(1);

    // Tr M - e - sqrt(2d) x - d y >= 0 with e = 1 - hhat B hhat^H.
    b(r_margin) = -1.0;
    A(r_margin, L.x_index(k)) = std::sqrt(2.0 * d);
    A(r_margin, L.y_index(k)) = d;
    A(r_soc, L.x_index(k)) = -1.0;
    A.block(r_psd_m, L.y_index(k), nb, 1) = -I_h;
    A(r_y, L.y_index(k)) = -1.0;

    for (int j = 0; j < K; ++j) {
      const double coef = (j == k) ? 1.0 / a : -1.0;
      for (int t = 0; t < nb; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        const int col = L.w_offset(j) + t;
        const Eigen::VectorXcd Eh = E[ts] * hk_h;
        const double quad = (hk * Eh)(0).real();
        A(r_margin, col) = -(eps * coef * E[ts].trace().real() + coef * quad);
        A.block(r_soc + 1, col, nb, 1) = -eps * coef * E_h[ts];
        for (int i = 0; i < Nt; ++i) {
          const cplx zi = -se * coef * Eh(i);
          A(r_soc + 1 + nb + 2 * i, col) = -std::sqrt(2.0) * zi.real();
          A(r_soc + 1 + nb + 2 * i + 1, col) = -std::sqrt(2.0) * zi.imag();
        }
        A.block(r_psd_m, col, nb, 1) = -eps * coef * E_h[ts];
        if (j == k) A.block(r_psd_w, col, nb, 1) = -E_h[ts];
      }
    }
  }

  prog.problem.A = A.sparseView();
  prog.problem.b = std::move(b);
  prog.problem.c = std::move(c);
  return prog;
}

ConicProblem build_power_program(const CsitRealization& hhat, const Eigen::MatrixXcd& U,
                                 std::span<const double> delta, std::span<const FlowParams> flows,
                                 const SystemConfig& cfg) {
  const int K = cfg.K;
  const int Nt = cfg.Nt;
  if (U.rows() != Nt || U.cols() != K) throw std::invalid_argument("build_power_program: U must be Nt x K");
  const Step2Program full = build_step2_program(hhat, delta, flows, cfg);
  const Step2Layout& L = full.layout;
  const int nb = Nt * Nt;
  const int soc_dim = 1 + nb + 2 * Nt;
  const int rows_per_flow = 1 + soc_dim + 2 * nb + 1;

  // Column map (p_k, x_k, y_k) -> (W params, x, y).
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(L.num_vars(), 3 * K);
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXcd u = U.col(k);
    T.block(L.w_offset(k), 3 * k, nb, 1) = L.params(u * u.adjoint());
    T(L.x_index(k), 3 * k + 1) = 1.0;
    T(L.y_index(k), 3 * k + 2) = 1.0;
  }
  const Eigen::MatrixXd AT = Eigen::MatrixXd(full.problem.A) * T;

  // W_k >= 0 becomes p_k >= 0; every other row carries over.
  const int rows_per_flow_new = rows_per_flow - nb + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(K * rows_per_flow_new, 3 * K);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(K * rows_per_flow_new);
  ConicProblem prog;
  for (int k = 0; k < K; ++k) {
    const int src = k * rows_per_flow;
    const int dst = k * rows_per_flow_new;
    const int keep = 1 + soc_dim + nb;  // margin, SOC, M + yI >= 0
    A.middleRows(dst, keep) = AT.middleRows(src, keep);
    b.segment(dst, keep) = full.problem.b.segment(src, keep);
    A(dst + keep, 3 * k) = -1.0;
    A.row(dst + keep + 1) = AT.row(src + keep + nb);
    b(dst + keep + 1) = full.problem.b(src + keep + nb);
    prog.cones.nonneg(1).soc(soc_dim).hpsd(Nt).nonneg(1).nonneg(1);
  }
  prog.A = A.sparseView();
  prog.b = std::move(b);
  prog.c = T.transpose() * full.problem.c;
  return prog;
}

std::optional<Eigen::VectorXd> certified_powers(const CsitRealization& hhat, const Eigen::MatrixXcd& U,
                                                std::span<const double> delta, std::span<const FlowParams> flows,
                                                const SolverSettings& solver) {
  SystemConfig cfg;
  cfg.K = static_cast<int>(U.cols());
  cfg.Nt = static_cast<int>(U.rows());
  const ConicSolution cs = solve(build_power_program(hhat, U, delta, flows, cfg), solver);
  if (cs.status != SolveStatus::Optimal) return std::nullopt;
  Eigen::VectorXd p(cfg.K);
  for (int k = 0; k < cfg.K; ++k) p(k) = std::max(cs.x(3 * k), 0.0);
  return p;
}

std::string to_string(SdrStatus s) {
  switch (s) {
    case SdrStatus::Converged: return "converged";
    case SdrStatus::MaxIter: return "max_iter";
    case SdrStatus::Infeasible: return "infeasible";
    case SdrStatus::SolverFailure: return "solver_failure";
  }
  return "unknown";
}

double SdrSolution::total_trace() const {
  double t = 0.0;
  for (const auto& W : Wset) t += W.trace().real();
  return t;
}

SolverSettings AlternatingOptions::default_solver() {
  SolverSettings st;
  st.method = SolverMethod::InteriorPoint;
  st.tol = 1e-7;
  st.max_iter = 100;
  return st;
}

Step2Result solve_step2(const CsitRealization& hhat, std::span<const double> delta, std::span<const FlowParams> flows,
                        const SystemConfig& cfg, const SolverSettings& solver) {
  const Step2Program prog = build_step2_program(hhat, delta, flows, cfg);
  const ConicSolution cs = solve(prog.problem, solver);
  Step2Result out;
  out.status = cs.status;
  const int K = cfg.K;
  auto& s = out.sol;
  s.delta = Eigen::Map<const Eigen::VectorXd>(delta.data(), K);
  s.x = Eigen::VectorXd::Zero(K);
  s.y = Eigen::VectorXd::Zero(K);
  s.margin_dual = Eigen::VectorXd::Zero(K);
  s.conic_solves = 1;
  if (cs.status != SolveStatus::Optimal) return out;
  for (int k = 0; k < K; ++k) {
    s.Wset.push_back(prog.layout.gram(cs.x, k));
    s.x(k) = cs.x(prog.layout.x_index(k));
    s.y(k) = cs.x(prog.layout.y_index(k));
    s.margin_dual(k) = cs.y(prog.margin_row[static_cast<std::size_t>(k)]);
  }
  return out;
}

Eigen::VectorXd bernstein_margins(const CsitRealization& hhat, std::span<const Eigen::MatrixXcd> W,
                                  std::span<const FlowParams> flows) {
  const int K = static_cast<int>(flows.size());
  Eigen::VectorXd c(K);
  for (int k = 0; k < K; ++k) {
    const auto t = quadform_from_gram(hhat.hhat.row(k), W, k, flows[static_cast<std::size_t>(k)].rate_R,
                                      flows[static_cast<std::size_t>(k)].eps);
    c(k) = t.M.trace().real() - t.e;
  }
  return c;
}

DeltaStep solve_delta_step(const SdrSolution& state, const ValueGradient& gradient, const CsitRealization& hhat,
                           std::span<const FlowParams> flows) {
  const int K = static_cast<int>(flows.size());
  if (gradient.g.size() != K || static_cast<int>(state.Wset.size()) != K)
    throw std::invalid_argument("solve_delta_step: size mismatch");
  const Eigen::VectorXd margin = bernstein_margins(hhat, state.Wset, flows);
  DeltaStep out{Eigen::VectorXd::Zero(K), std::vector<bool>(static_cast<std::size_t>(K), false)};
  for (int k = 0; k < K; ++k) {
    const auto dm = delta_max(margin(k), std::max(state.x(k), 0.0), std::max(state.y(k), 0.0));
    out.delta(k) = dm.delta;
    out.unguaranteed[static_cast<std::size_t>(k)] = !dm.guaranteed;
  }
  return out;
}

double surrogate_delta(double mu, double x, double y, double weight) {
  mu = std::max(mu, 0.0);
  x = std::max(x, 0.0);
  y = std::max(y, 0.0);
  weight = std::max(weight, 0.0);
  auto phi = [&](double d) { return mu * (std::sqrt(2.0 * d) * x + d * y) + weight * std::exp(-d); };
  // Coarse log grid, then golden-section refinement around the best node.
  constexpr int kGrid = 96;
  std::vector<double> grid{0.0};
  for (int i = 0; i < kGrid; ++i) grid.push_back(1e-5 * std::pow(kDeltaCap / 1e-5, i / double(kGrid - 1)));
  std::size_t best = 0;
  double fbest = phi(0.0);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double f = phi(grid[i]);
    if (f < fbest) {
      fbest = f;
      best = i;
    }
  }
  double lo = grid[best == 0 ? 0 : best - 1];
  double hi = grid[std::min(best + 1, grid.size() - 1)];
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c1 = hi - gr * (hi - lo), c2 = lo + gr * (hi - lo);
  double f1 = phi(c1), f2 = phi(c2);
  for (int it = 0; it < 80 && hi - lo > 1e-12 * (1.0 + hi); ++it) {
    if (f1 < f2) {
      hi = c2;
      c2 = c1;
      f2 = f1;
      c1 = hi - gr * (hi - lo);
      f1 = phi(c1);
    } else {
      lo = c1;
      c1 = c2;
      f1 = f2;
      c2 = lo + gr * (hi - lo);
      f2 = phi(c2);
    }
  }
  const double cand = 0.5 * (lo + hi);
  return phi(cand) < fbest ? cand : grid[best];
}

double sdr_objective(std::span<const Eigen::MatrixXcd> W, const Eigen::VectorXd& delta, const Eigen::VectorXd& weight) {
  double f = 0.0;
  for (std::size_t k = 0; k < W.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    f += W[k].trace().real() - weight(i) * (1.0 - std::exp(-delta(i)));
  }
  return f;
}

namespace {

// Step-2 solve with the halving backoff on failure. Returns false when even
// delta = 0 fails.
bool step2_with_backoff(const CsitRealization& hhat, Eigen::VectorXd& delta, std::span<const FlowParams> flows,
                        const SystemConfig& cfg, const SolverSettings& solver, SdrSolution& out, int& solves,
                        int& backoffs) {
  for (int attempt = 0; attempt < 60; ++attempt) {
    auto r = solve_step2(hhat, std::span<const double>(delta.data(), static_cast<std::size_t>(delta.size())), flows,
                         cfg, solver);
    ++solves;
    if (r.status == SolveStatus::Optimal) {
      out = std::move(r.sol);
      return true;
    }
    if (delta.maxCoeff() == 0.0) return false;
    delta *= 0.5;
    if (delta.maxCoeff() < 1e-9) delta.setZero();
    ++backoffs;
  }
  return false;
}

// Smallest admissible slacks for the current Gram set.
void polish_slacks(const CsitRealization& hhat, std::span<const FlowParams> flows, SdrSolution& s) {
  for (std::size_t k = 0; k < flows.size(); ++k) {
    const auto t = quadform_from_gram(hhat.hhat.row(static_cast<Eigen::Index>(k)), s.Wset, static_cast<int>(k),
                                      flows[k].rate_R, flows[k].eps);
    s.x(static_cast<Eigen::Index>(k)) = soc_norm(t.M, t.z);
    s.y(static_cast<Eigen::Index>(k)) = s_plus(t.M);
  }
}

}  // namespace

SdrSolution alternating_solve(const CsitRealization& hhat, const Eigen::VectorXd& weight,
                              std::span<const FlowParams> flows, const SystemConfig& cfg,
                              const AlternatingOptions& opts) {
  const int K = cfg.K;
  if (weight.size() != K) throw std::invalid_argument("alternating_solve: weight size != K");
  if (!(opts.delta_init >= 0.0)) throw std::invalid_argument("alternating_solve: delta_init must be >= 0");

  Eigen::VectorXd delta = Eigen::VectorXd::Constant(K, std::min(opts.delta_init, kDeltaCap));
  int solves = 0;
  int backoffs = 0;
  SdrSolution cur;
  if (!step2_with_backoff(hhat, delta, flows, cfg, opts.solver, cur, solves, backoffs)) {
    cur.status = SdrStatus::Infeasible;
    cur.delta = delta;
    cur.conic_solves = solves;
    cur.backoffs = backoffs;
    return cur;
  }
  double F = sdr_objective(cur.Wset, cur.delta, weight);
  std::vector<double> trace{F};
  SdrStatus status = SdrStatus::MaxIter;
  int it = 0;

  for (it = 1; it <= opts.max_iter; ++it) {
    polish_slacks(hhat, flows, cur);
    Eigen::VectorXd target(K);
    if (opts.update == DeltaUpdate::Literal) {
      ValueGradient dummy{weight};
      target = solve_delta_step(cur, dummy, hhat, flows).delta;
    } else {
      for (int k = 0; k < K; ++k) target(k) = surrogate_delta(cur.margin_dual(k), cur.x(k), cur.y(k), weight(k));
    }

    if ((target - cur.delta).cwiseAbs().maxCoeff() <= 1e-9) {
      status = SdrStatus::Converged;
      break;
    }
    bool accepted = false;
    SdrSolution next;
    double F_next = F;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
      const double frac = std::ldexp(1.0, -bt);
      const Eigen::VectorXd cand = cur.delta + frac * (target - cur.delta);
      auto r = solve_step2(hhat, std::span<const double>(cand.data(), static_cast<std::size_t>(K)), flows, cfg,
                           opts.solver);
      ++solves;
      if (r.status != SolveStatus::Optimal) continue;
      const double Fc = sdr_objective(r.sol.Wset, cand, weight);
      if (Fc <= F) {
        next = std::move(r.sol);
        F_next = Fc;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      status = SdrStatus::Converged;
      break;
    }
    const double rel = std::abs(F - F_next) / (1.0 + std::abs(F));
    cur = std::move(next);
    F = F_next;
    trace.push_back(F);
    if (rel < opts.rel_tol) {
      status = SdrStatus::Converged;
      break;
    }
  }
  polish_slacks(hhat, flows, cur);
  cur.objective_trace = std::move(trace);
  cur.iterations = std::min(it, opts.max_iter);
  cur.conic_solves = solves;
  cur.backoffs = backoffs;
  cur.status = status;
  return cur;
}

SdrSolution alternating_solve(const CsitRealization& hhat, const QueueState& Q, const ApproxValue& value,
                              std::span<const FlowParams> flows, const SystemConfig& cfg,
                              const AlternatingOptions& opts) {
  const ValueGradient g = value.gradient(Q);
  Eigen::VectorXd weight(cfg.K);
  for (int k = 0; k < cfg.K; ++k) weight(k) = std::max(g.g(k), 0.0) * flows[static_cast<std::size_t>(k)].rate_R;
  return alternating_solve(hhat, weight, flows, cfg, opts);
}

std::string to_string(ExtractionMethod m) {
  switch (m) {
    case ExtractionMethod::RankOne: return "rank_one";
    case ExtractionMethod::Randomized: return "randomized";
    case ExtractionMethod::JointPower: return "joint_power";
    case ExtractionMethod::DominantFallback: return "dominant_fallback";
  }
  return "unknown";
}

namespace {

double beam_slack(const CsitRealization& hhat, const BeamSet& beams, int k, double delta,
                  std::span<const FlowParams> flows) {
  const auto& f = flows[static_cast<std::size_t>(k)];
  const auto t = quadform_from_beams(hhat.hhat.row(k), beams, k, f.rate_R, f.eps);
  return conservative_feasible(t, delta).slack;
}

// Bernstein slack of flow k as a function of its own beam power p along a
// fixed direction u, with every other beam held fixed. All terms except the
// spectral one are polynomials in p and are precomputed.
class PowerSlack {
 public:
  PowerSlack(const CsitRealization& hhat, const BeamSet& beams, int k, const Eigen::VectorXcd& u, double delta,
             const FlowParams& f)
      : eps_(f.eps), inv_a_(1.0 / f.sinr_threshold()), delta_(delta), es_(static_cast<Eigen::Index>(u.size())) {
    const int K = static_cast<int>(beams.w.cols());
    const auto Nt = beams.w.rows();
    Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(Nt, Nt);
    for (int j = 0; j < K; ++j)
      if (j != k) S.noalias() += beams.w.col(j) * beams.w.col(j).adjoint();
    const Eigen::VectorXcd hh = hhat.hhat.row(k).adjoint();
    const Eigen::VectorXcd r = S * hh;
    const cplx c = u.dot(hh);  // u^H hhat^H
    const double c2 = std::norm(c);
    tr_s_ = S.trace().real();
    usu_ = u.dot(S * u).real();
    s_fro2_ = S.squaredNorm();
    c2_ = c2;
    cross_ = (std::conj(c) * u.dot(r)).real();
    r2_ = r.squaredNorm();
    hsh_ = hh.dot(r).real();
    S_ = eps_ * S;
    uu_ = eps_ * inv_a_ * u * u.adjoint();
  }

  double operator()(double p) {
    const double al = p * inv_a_;
    const double tr_m = eps_ * (al - tr_s_);
    const double m_fro2 = eps_ * eps_ * (al * al - 2.0 * al * usu_ + s_fro2_);
    const double z2 = eps_ * (al * al * c2_ - 2.0 * al * cross_ + r2_);
    const double e = 1.0 - al * c2_ + hsh_;
    es_.compute(S_ - p * uu_, Eigen::EigenvaluesOnly);
    const double splus = std::max(es_.eigenvalues().maxCoeff(), 0.0);
    const double soc = std::sqrt(std::max(m_fro2 + 2.0 * z2, 0.0));
    return tr_m - std::sqrt(2.0 * delta_) * soc - delta_ * splus - e;
  }

 private:
  double eps_, inv_a_, delta_;
  double tr_s_ = 0.0, usu_ = 0.0, s_fro2_ = 0.0, c2_ = 0.0, cross_ = 0.0, r2_ = 0.0, hsh_ = 0.0;
  Eigen::MatrixXcd S_, uu_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es_;
};

// Smallest power p <= p_max with flow k's certificate feasible when its beam
// is sqrt(p) u. The slack is concave in p and negative at p = 0, so the
// feasible powers form an interval; a geometric scan finds a point inside it
// and bisection locates the left end.
std::optional<double> min_feasible_power(const CsitRealization& hhat, const BeamSet& beams, int k,
                                         const Eigen::VectorXcd& u, double delta, double p_max,
                                         std::span<const FlowParams> flows) {
  PowerSlack slack_at(hhat, beams, k, u, delta, flows[static_cast<std::size_t>(k)]);
  double lo = 0.0;
  double hi = -1.0;
  constexpr int kScan = 24;
  const double ratio = std::pow(1e6, 1.0 / kScan);
  double p = 1e-6 * p_max;
  for (int i = 0; i <= kScan; ++i, p *= ratio) {
    p = std::min(p, p_max);
    if (slack_at(p) >= 0.0) {
      hi = p;
      break;
    }
    lo = p;
  }
  if (hi < 0.0) return std::nullopt;
  for (int i = 0; i < 60 && hi - lo > 1e-10 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (slack_at(mid) >= 0.0 ? hi : lo) = mid;
  }
  // Margin for rounding differences against the direct evaluation.
  return hi * (1.0 + 1e-9);
}

// Keep the extracted directions and solve every power at once. Targets move
// from the requested delta toward what the current beams already certify, so
// an accepted result never certifies less for any flow. Total power is capped
// like the per-flow repair.
void joint_power_repair(const CsitRealization& hhat, const Eigen::VectorXd& delta, std::span<const FlowParams> flows,
                        const std::vector<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>>& eig,
                        double p_max, const ExtractionOptions& opts, Extraction& out) {
  const auto K = out.beams.w.cols();
  const auto Nt = out.beams.w.rows();
  Eigen::MatrixXcd U(Nt, K);
  Eigen::VectorXd floor(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double nrm = out.beams.w.col(k).norm();
    U.col(k) = nrm > 0.0 ? Eigen::VectorXcd(out.beams.w.col(k) / nrm)
                         : Eigen::VectorXcd(eig[static_cast<std::size_t>(k)].eigenvectors().col(Nt - 1));
    const auto& f = flows[static_cast<std::size_t>(k)];
    const auto t = quadform_from_beams(hhat.hhat.row(k), out.beams, static_cast<int>(k), f.rate_R, f.eps);
    floor(k) = std::clamp(delta_max(t.M.trace().real() - t.e, soc_norm(t.M, t.z), s_plus(t.M)).delta, 0.0, delta(k));
  }
  double step = 1.0;
  for (int attempt = 0; attempt <= opts.joint_backoffs; ++attempt, step *= 0.5) {
    const Eigen::VectorXd d = floor + step * (delta - floor);
    const auto p = certified_powers(hhat, U, std::span<const double>(d.data(), static_cast<std::size_t>(K)), flows,
                                    AlternatingOptions::default_solver());
    if (!p || p->sum() > p_max) continue;
    const BeamSet beams{U * p->cwiseSqrt().asDiagonal()};
    bool ok = true;
    for (Eigen::Index k = 0; k < K && ok; ++k)
      if (beam_slack(hhat, beams, static_cast<int>(k), d(k), flows) < -1e-7) ok = false;
    if (!ok) continue;
    for (Eigen::Index k = 0; k < K; ++k)
      if (beam_slack(hhat, out.beams, static_cast<int>(k), delta(k), flows) < 0.0)
        out.method[static_cast<std::size_t>(k)] = ExtractionMethod::JointPower;
    out.beams = beams;
    return;
  }
}

}  // namespace

Extraction extract_rank_one(std::span<const Eigen::MatrixXcd> Wset, const CsitRealization& hhat,
                            const Eigen::VectorXd& delta, std::span<const FlowParams> flows, Rng& rng,
                            const ExtractionOptions& opts) {
  const int K = static_cast<int>(Wset.size());
  if (K == 0 || static_cast<int>(flows.size()) != K || delta.size() != K || hhat.hhat.rows() != K)
    throw std::invalid_argument("extract_rank_one: size mismatch");
  const int Nt = static_cast<int>(Wset[0].rows());
  if (opts.candidates < 1 || !(opts.rank_tol >= 0.0) || opts.repair_passes < 0 || !(opts.max_power_ratio >= 1.0))
    throw std::invalid_argument("extract_rank_one: bad options");

  Extraction out;
  out.beams = BeamSet::zeros(Nt, K);
  out.method.assign(static_cast<std::size_t>(K), ExtractionMethod::RankOne);
  out.degraded.assign(static_cast<std::size_t>(K), false);

  std::vector<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>> eig;
  eig.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto& W = Wset[static_cast<std::size_t>(k)];
    if (W.rows() != Nt || W.cols() != Nt) throw std::invalid_argument("extract_rank_one: W must be Nt x Nt");
    eig.emplace_back(0.5 * (W + W.adjoint()));
    const auto& es = eig.back();
    const double l1 = std::max(es.eigenvalues()(Nt - 1), 0.0);
    const double l2 = Nt > 1 ? std::max(es.eigenvalues()(Nt - 2), 0.0) : 0.0;
    // Dominant direction carrying the full trace; kept if randomization fails.
    out.beams.w.col(k) = std::sqrt(std::max(W.trace().real(), 0.0)) * es.eigenvectors().col(Nt - 1);
    if (l1 > 0.0 && l2 > opts.rank_tol * l1) out.method[static_cast<std::size_t>(k)] = ExtractionMethod::Randomized;
  }

  // Randomization for the flows whose relaxation is not rank one.
  for (int k = 0; k < K; ++k) {
    if (out.method[static_cast<std::size_t>(k)] != ExtractionMethod::Randomized) continue;
    const auto& es = eig[static_cast<std::size_t>(k)];
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const double p_max = opts.max_power_ratio * std::max(Wset[static_cast<std::size_t>(k)].trace().real(), 1e-12);
    double best_p = std::numeric_limits<double>::infinity();
    Eigen::VectorXcd best_u;
    for (int c = 0; c < opts.candidates; ++c) {
      const Eigen::VectorXcd g = complex_gaussian(rng, Nt, 1);
      const Eigen::VectorXcd xi = es.eigenvectors() * root.cast<cplx>().asDiagonal() * g;
      const double nrm = xi.norm();
      if (!(nrm > 0.0)) continue;
      const Eigen::VectorXcd u = xi / nrm;
      const auto p = min_feasible_power(hhat, out.beams, k, u, delta(k), p_max, flows);
      if (p && *p < best_p) {
        best_p = *p;
        best_u = u;
      }
    }
    if (std::isfinite(best_p)) {
      out.beams.w.col(k) = std::sqrt(best_p) * best_u;
    } else {
      out.method[static_cast<std::size_t>(k)] = ExtractionMethod::DominantFallback;
      out.degraded[static_cast<std::size_t>(k)] = true;
    }
  }

  // Rescaling one flow changes the interference seen by the others; repair by
  // re-solving each violated flow's power along its current direction.
  for (int pass = 0; pass < opts.repair_passes; ++pass) {
    bool clean = true;
    for (int k = 0; k < K; ++k) {
      if (beam_slack(hhat, out.beams, k, delta(k), flows) >= 0.0) continue;
      clean = false;
      const Eigen::VectorXcd col = out.beams.w.col(k);
      const double nrm = col.norm();
      if (!(nrm > 0.0)) continue;
      const double p_max = opts.max_power_ratio * std::max(Wset[static_cast<std::size_t>(k)].trace().real(), 1e-12);
      const auto p = min_feasible_power(hhat, out.beams, k, col / nrm, delta(k), p_max, flows);
      if (p) out.beams.w.col(k) = std::sqrt(*p) * col / nrm;
    }
    if (clean) break;
  }

  if (opts.joint_power_repair) {
    bool clean = true;
    for (int k = 0; k < K; ++k)
      if (beam_slack(hhat, out.beams, k, delta(k), flows) < 0.0) clean = false;
    double trace = 0.0;
    for (const auto& W : Wset) trace += std::max(W.trace().real(), 0.0);
    if (!clean) joint_power_repair(hhat, delta, flows, eig, opts.max_power_ratio * std::max(trace, 1e-12), opts, out);
  }

  out.slack.resize(K);
  out.achieved.resize(K);
  for (int k = 0; k < K; ++k) {
    const auto& f = flows[static_cast<std::size_t>(k)];
    const auto t = quadform_from_beams(hhat.hhat.row(k), out.beams, k, f.rate_R, f.eps);
    out.slack(k) = conservative_feasible(t, delta(k)).slack;
    out.achieved(k) = delta_max(t.M.trace().real() - t.e, soc_norm(t.M, t.z), s_plus(t.M)).delta;
    if (out.slack(k) < 0.0) out.degraded[static_cast<std::size_t>(k)] = true;
  }
  return out;
}

ControllerContext::ControllerContext(const SystemConfig& c, std::vector<FlowParams> f)
    : cfg(c), flows(std::move(f)) {
  cfg.validate();
  validate_flows(flows);
  if (static_cast<int>(flows.size()) != cfg.K) throw std::invalid_argument("ControllerContext: need K flows");
  if (std::all_of(flows.begin(), flows.end(), [](const FlowParams& fl) { return fl.lambda > 0.0; }))
    value.emplace(flows);
}

namespace {

Decision failed_decision(int Nt, int K) {
  Decision d;
  d.beams = BeamSet::zeros(Nt, K);
  d.delta = Eigen::VectorXd::Zero(K);
  d.per_targets = Eigen::VectorXd::Ones(K);
  d.diag.failed = true;
  d.diag.unguaranteed.assign(static_cast<std::size_t>(K), true);
  return d;
}

// Beams from an SDR solution; the reported targets are those the extracted
// beams actually certify, capped at the optimized ones.
Decision finish(const SdrSolution& sol, const CsitRealization& hhat, const ControllerContext& ctx, Rng& rng) {
  const int K = ctx.cfg.K;
  Decision d;
  const Extraction ex = extract_rank_one(sol.Wset, hhat, sol.delta, ctx.flows, rng, ctx.extraction);
  d.beams = ex.beams;
  d.delta = sol.delta.cwiseMin(ex.achieved).cwiseMax(0.0);
  d.per_targets = (-d.delta.array()).exp().matrix();
  d.diag.sdr_iterations = sol.iterations;
  d.diag.conic_solves = sol.conic_solves;
  d.diag.trace_length = static_cast<int>(sol.objective_trace.size());
  d.diag.backoffs = sol.backoffs;
  d.diag.unguaranteed.assign(static_cast<std::size_t>(K), false);
  for (int k = 0; k < K; ++k) {
    if (!d.diag.extraction.empty()) d.diag.extraction += '|';
    d.diag.extraction += to_string(ex.method[static_cast<std::size_t>(k)]);
    if (ex.degraded[static_cast<std::size_t>(k)]) d.diag.degraded = true;
    d.diag.unguaranteed[static_cast<std::size_t>(k)] = !(d.delta(k) > 0.0);
  }
  return d;
}

}  // namespace

Decision decide(const PolicyKind& kind, const CsitRealization& hhat, const QueueState& Q, const ControllerContext& ctx,
                Rng& rng) {
  validate_policy(kind);
  const int K = ctx.cfg.K;
  const int Nt = ctx.cfg.Nt;
  if (hhat.hhat.rows() != K || hhat.hhat.cols() != Nt) throw std::invalid_argument("decide: CSIT must be K x Nt");
  if (Q.q.size() != K || (Q.q.array() < 0.0).any()) throw std::invalid_argument("decide: need K nonnegative queues");

  if (const auto* rb = std::get_if<RandomBeam>(&kind)) {
    Decision d;
    d.beams = BeamSet::zeros(Nt, K);
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXcd g = complex_gaussian(rng, Nt, 1);
      d.beams.w.col(k) = std::sqrt(rb->total_power / K) * g / g.norm();
    }
    d.delta = Eigen::VectorXd::Zero(K);
    d.per_targets = Eigen::VectorXd::Ones(K);
    d.diag.extraction = "random";
    d.diag.unguaranteed.assign(static_cast<std::size_t>(K), true);
    return d;
  }

  if (const auto* fp = std::get_if<FixedPer>(&kind)) {
    Eigen::VectorXd delta = Eigen::VectorXd::Constant(K, -std::log(fp->rho0));
    SdrSolution sol;
    int solves = 0;
    int backoffs = 0;
    if (!step2_with_backoff(hhat, delta, ctx.flows, ctx.cfg, ctx.alt.solver, sol, solves, backoffs)) {
      Decision d = failed_decision(Nt, K);
      d.diag.conic_solves = solves;
      d.diag.backoffs = backoffs;
      return d;
    }
    sol.conic_solves = solves;
    sol.backoffs = backoffs;
    sol.status = SdrStatus::Converged;
    return finish(sol, hhat, ctx, rng);
  }

  Eigen::VectorXd weight(K);
  if (const auto* ca = std::get_if<CsitAdaptivePer>(&kind)) {
    weight.setConstant(ca->beta);
  } else {
    if (!ctx.value) throw std::invalid_argument("decide: the queue-aware policy needs lambda > 0 for every flow");
    const ValueGradient g = ctx.value->gradient(Q);
    for (int k = 0; k < K; ++k) weight(k) = std::max(g.g(k), 0.0) * ctx.flows[static_cast<std::size_t>(k)].rate_R;
  }
  const SdrSolution sol = alternating_solve(hhat, weight, ctx.flows, ctx.cfg, ctx.alt);
  if (sol.status == SdrStatus::Infeasible || sol.Wset.empty()) {
    Decision d = failed_decision(Nt, K);
    d.diag.conic_solves = sol.conic_solves;
    d.diag.backoffs = sol.backoffs;
    return d;
  }
  return finish(sol, hhat, ctx, rng);
}

}  // namespace dcbf
