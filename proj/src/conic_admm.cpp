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

// Homogeneous self-dual embedding solved by ADMM (O'Donoghue et al. style).
// The iterate is u = (x, y, tau), v = (r, s, kappa); each step solves one
// linear system with the fixed matrix I + Q and projects onto
// R^n x K* x R_+.

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "conic_internal.hpp"

namespace dcbf::detail {

namespace {

struct Scaling {
  Eigen::VectorXd D;  // rows
  Eigen::VectorXd E;  // columns
  double sb = 1.0;
  double sc = 1.0;
};

// Ruiz equilibration. Rows of one SOC or PSD block share a factor so cone
// membership is preserved.
Scaling equilibrate(Eigen::MatrixXd& A, const ConeSpec& cones, bool enabled) {
  const auto m = A.rows();
  const auto n = A.cols();
  Scaling sc{Eigen::VectorXd::Ones(m), Eigen::VectorXd::Ones(n)};
  if (!enabled) return sc;
  constexpr double kMin = 1e-4;
  constexpr double kMax = 1e4;
  for (int pass = 0; pass < 15; ++pass) {
    Eigen::VectorXd r = A.rowwise().lpNorm<Eigen::Infinity>();
    int off = 0;
    for (const auto& blk : cones.blocks) {
      const int d = blk.dim();
      if (blk.kind != ConeKind::Zero && blk.kind != ConeKind::NonNeg)
        r.segment(off, d).setConstant(r.segment(off, d).maxCoeff());
      off += d;
    }
    const Eigen::VectorXd dr = r.unaryExpr([&](double t) { return 1.0 / std::sqrt(std::clamp(t, kMin, kMax)); });
    A = dr.asDiagonal() * A;
    sc.D.array() *= dr.array();

    const Eigen::VectorXd cn = A.colwise().lpNorm<Eigen::Infinity>().transpose();
    const Eigen::VectorXd dc = cn.unaryExpr([&](double t) { return 1.0 / std::sqrt(std::clamp(t, kMin, kMax)); });
    A = A * dc.asDiagonal();
    sc.E.array() *= dc.array();
  }
  return sc;
}

void project_dual_cone(Eigen::Ref<Eigen::VectorXd> y, const ConeSpec& cones) {
  int off = 0;
  for (const auto& blk : cones.blocks) {
    project_block(y.segment(off, blk.dim()), blk, true);
    off += blk.dim();
  }
}

}  // namespace

ConicSolution solve_operator_splitting(const ConicProblem& p, const SolverSettings& st) {
  const auto n = p.c.size();
  const auto m = p.b.size();
  const Eigen::MatrixXd A_orig = Eigen::MatrixXd(p.A);

  Eigen::MatrixXd A = A_orig;
  Scaling scl = equilibrate(A, p.cones, st.equilibrate);
  Eigen::VectorXd b = scl.D.cwiseProduct(p.b);
  Eigen::VectorXd c = scl.E.cwiseProduct(p.c);
  if (st.equilibrate) {
    const double bn = b.norm();
    const double cn = c.norm();
    if (bn > 0.0) scl.sb = std::clamp(1.0 / bn, 1e-4, 1e4);
    if (cn > 0.0) scl.sc = std::clamp(1.0 / cn, 1e-4, 1e4);
  }
  b *= scl.sb;
  c *= scl.sc;

  // (I + A'A) factor for the reduced solve of [[I, A'], [-A, I]].
  Eigen::MatrixXd IAtA = Eigen::MatrixXd::Identity(n, n);
  IAtA.selfadjointView<Eigen::Lower>().rankUpdate(A.transpose());
  const Eigen::LLT<Eigen::MatrixXd> llt(IAtA);

  auto solve_M = [&](const Eigen::VectorXd& rx, const Eigen::VectorXd& ry, Eigen::VectorXd& x, Eigen::VectorXd& y) {
    x = llt.solve(rx - A.transpose() * ry);
    y = ry + A * x;
  };

  Eigen::VectorXd px, py;
  solve_M(c, b, px, py);
  const double h_dot_p = c.dot(px) + b.dot(py);

  // Iterates.
  Eigen::VectorXd ux = Eigen::VectorXd::Zero(n), uy = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd vx = Eigen::VectorXd::Zero(n), vy = Eigen::VectorXd::Zero(m);
  double ut = 1.0, vt = 1.0;
  if (st.warm_start) {
    const auto& w = *st.warm_start;
    ux = scl.E.cwiseInverse().cwiseProduct(w.x) * scl.sb;
    uy = scl.D.cwiseInverse().cwiseProduct(w.y) * scl.sc;
    vy = scl.D.cwiseProduct(w.s) * scl.sb;
    vt = 0.0;
  }

  ConicSolution sol;
  auto unscale = [&](double tau) {
    sol.x = scl.E.cwiseProduct(ux) / (scl.sb * tau);
    sol.s = scl.D.cwiseInverse().cwiseProduct(vy) / (scl.sb * tau);
    sol.y = scl.D.cwiseProduct(uy) / (scl.sc * tau);
  };

  double alpha = st.relaxation;
  double window_start_metric = std::numeric_limits<double>::infinity();
  double best_metric = std::numeric_limits<double>::infinity();
  Eigen::VectorXd wx(n), wy(m), tx(n), ty(m), ox(n), oy(m);

  for (int it = 1; it <= st.max_iter; ++it) {
    // Linear step.
    wx = ux + vx;
    wy = uy + vy;
    const double wt = ut + vt;
    solve_M(wx, wy, tx, ty);
    const double tt = (wt + c.dot(tx) + b.dot(ty)) / (1.0 + h_dot_p);
    tx -= tt * px;
    ty -= tt * py;

    // Relaxation and projection.
    ox = alpha * tx + (1.0 - alpha) * ux;
    oy = alpha * ty + (1.0 - alpha) * uy;
    const double ot = alpha * tt + (1.0 - alpha) * ut;

    ux = ox - vx;
    uy = oy - vy;
    project_dual_cone(uy, p.cones);
    ut = std::max(ot - vt, 0.0);

    vx += ux - ox;
    vy += uy - oy;
    vt += ut - ot;

    if (it % st.check_every != 0 && it != st.max_iter) continue;

    sol.iterations = it;
    if (ut > 1e-12) {
      unscale(ut);
      const Residuals r = residuals(p, A_orig, sol.x, sol.s, sol.y);
      sol.primal_res = r.primal_res;
      sol.dual_res = r.dual_res;
      sol.gap = r.gap;
      sol.objective = r.objective;
      if (is_optimal(r, st.tol)) {
        sol.status = SolveStatus::Optimal;
        return sol;
      }
      const double metric =
          std::max({r.primal_res, r.dual_res, std::abs(r.gap) / (1.0 + std::abs(r.objective))});
      best_metric = std::min(best_metric, metric);
    }

    // Certificates of infeasibility from the unnormalized direction.
    const Eigen::VectorXd ydir = scl.D.cwiseProduct(uy) / scl.sc;
    const double by = p.b.dot(ydir);
    if (by < 0.0 && (A_orig.transpose() * ydir).norm() / (1.0 + p.c.norm()) <= st.tol * (-by)) {
      sol.x = Eigen::VectorXd::Zero(n);
      sol.s = Eigen::VectorXd::Zero(m);
      sol.y = ydir / (-by);
      sol.status = SolveStatus::Infeasible;
      return sol;
    }
    const Eigen::VectorXd xdir = scl.E.cwiseProduct(ux) / scl.sb;
    const Eigen::VectorXd sdir = scl.D.cwiseInverse().cwiseProduct(vy) / scl.sb;
    const double cx = p.c.dot(xdir);
    if (cx < 0.0 && (A_orig * xdir + sdir).norm() / (1.0 + p.b.norm()) <= st.tol * (-cx)) {
      sol.x = xdir / (-cx);
      sol.s = sdir / (-cx);
      sol.y = Eigen::VectorXd::Zero(m);
      sol.status = SolveStatus::Unbounded;
      return sol;
    }

    if (it % st.stall_window == 0) {
      if (best_metric > 0.99 * window_start_metric) {
        if (sol.restarted) break;
        sol.restarted = true;
        alpha = 1.8;
      }
      window_start_metric = best_metric;
    }
  }
  if (ut > 1e-12) unscale(ut);
  sol.status = SolveStatus::MaxIter;
  return sol;
}

}  // namespace dcbf::detail
