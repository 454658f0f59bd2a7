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

// Primal-dual interior point method on the homogeneous self-dual embedding
// with Nesterov-Todd scaling and a Mehrotra predictor-corrector step.
//
// Zero-cone rows become equality constraints A_eq x = b_eq; the remaining
// rows are G x + s = h with s in a product of nonnegative, second-order and
// PSD cones. Each Newton system is reduced to the dense Schur complement
// G' W^-1 W^-T G (plus the equality block when present).

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "conic_internal.hpp"

namespace dcbf::detail {

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Block {
  ConeKind kind;
  int n;
  int off;  // offset in the inequality part
  int dim;
};

// NT scaling of one block.
struct BlockScaling {
  Vec d;       // NonNeg: W = diag(d)
  double beta = 1.0;
  Vec v;       // SecondOrder: W = beta (2 v v' - J)
  Vec lambda;  // scaled point, W z = W^-T s
  Mat Wm, Winvm;  // dense W and W^-1 (SecondOrder and PSD blocks)
};

double soc_jdot(const Vec& a, const Vec& b) { return a(0) * b(0) - a.tail(a.size() - 1).dot(b.tail(b.size() - 1)); }

Vec soc_J(const Vec& a) {
  Vec r = -a;
  r(0) = a(0);
  return r;
}

// Real symmetric and complex Hermitian PSD blocks share one implementation;
// Psd<Scalar> converts between the block vector and its matrix.
template <typename Scalar>
struct Psd;

template <>
struct Psd<double> {
  using M = Eigen::MatrixXd;
  static M mat(const Vec& v, int n) { return smat(v, n); }
  static Vec vec(const M& m) { return svec(m); }
};

template <>
struct Psd<std::complex<double>> {
  using M = Eigen::MatrixXcd;
  static M mat(const Vec& v, int n) { return hmat(v, n); }
  static Vec vec(const M& m) { return hvec(m); }
};

// The congruence U -> P^H U P as a matrix on block coordinates.
template <typename Scalar>
Mat congruence(const typename Psd<Scalar>::M& P, int dim) {
  const int n = static_cast<int>(P.rows());
  Mat K(dim, dim);
  Vec e = Vec::Zero(dim);
  for (int t = 0; t < dim; ++t) {
    e(t) = 1.0;
    K.col(t) = Psd<Scalar>::vec(P.adjoint() * Psd<Scalar>::mat(e, n) * P);
    e(t) = 0.0;
  }
  return K;
}

template <typename Scalar>
double psd_min_eig(const Vec& u, int n) {
  Eigen::SelfAdjointEigenSolver<typename Psd<Scalar>::M> es(Psd<Scalar>::mat(u, n), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// NT scaling W(U) = R^H U R with W(Z) = W^-H(S) = diag(lambda).
template <typename Scalar>
bool psd_scaling(const Vec& ss, const Vec& zz, int n, int dim, Mat& Wm, Mat& Winvm, Vec& lambda) {
  using M = typename Psd<Scalar>::M;
  Eigen::LLT<M> ls(Psd<Scalar>::mat(ss, n)), lz(Psd<Scalar>::mat(zz, n));
  if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
  const M Ls = ls.matrixL();
  const M Lz = lz.matrixL();
  Eigen::JacobiSVD<M> svd(Lz.adjoint() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec sig = svd.singularValues();
  if (!(sig.minCoeff() > 0.0)) return false;
  const M R = Ls * svd.matrixV() * sig.cwiseSqrt().cwiseInverse().asDiagonal();
  const M Rinv = sig.cwiseSqrt().asDiagonal() * svd.matrixV().adjoint() *
                 Ls.template triangularView<Eigen::Lower>().solve(M::Identity(n, n));
  Wm = congruence<Scalar>(R, dim);
  Winvm = congruence<Scalar>(Rinv, dim);
  lambda = Psd<Scalar>::vec(M(sig.template cast<Scalar>().asDiagonal()));
  return true;
}

template <typename Scalar>
Vec psd_jprod(const Vec& a, const Vec& c, int n) {
  using M = typename Psd<Scalar>::M;
  const M A = Psd<Scalar>::mat(a, n);
  const M C = Psd<Scalar>::mat(c, n);
  return Psd<Scalar>::vec(0.5 * (A * C + C * A));
}

// Solve lambda o w = q for diagonal lambda.
template <typename Scalar>
Vec psd_jdiv(const Vec& l, const Vec& q, int n) {
  using M = typename Psd<Scalar>::M;
  const Vec ld = Psd<Scalar>::mat(l, n).diagonal().real();
  M Q = Psd<Scalar>::mat(q, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) Q(i, j) *= 2.0 / (ld(i) + ld(j));
  return Psd<Scalar>::vec(Q);
}

// Largest t with diag(lambda) + t D PSD.
template <typename Scalar>
double psd_step(const Vec& l, const Vec& d, int n) {
  using M = typename Psd<Scalar>::M;
  const Vec isq = Psd<Scalar>::mat(l, n).diagonal().real().cwiseSqrt().cwiseInverse();
  const M D = isq.asDiagonal() * Psd<Scalar>::mat(d, n) * isq.asDiagonal();
  Eigen::SelfAdjointEigenSolver<M> es(D, Eigen::EigenvaluesOnly);
  const double mn = es.eigenvalues()(0);
  return mn < 0.0 ? -1.0 / mn : std::numeric_limits<double>::infinity();
}

bool is_psd(ConeKind k) { return k == ConeKind::PsdReal || k == ConeKind::PsdHermitian; }

class Cones {
 public:
  explicit Cones(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
    for (const auto& b : blocks_) {
      dim_ += b.dim;
      degree_ += is_psd(b.kind) ? b.n : (b.kind == ConeKind::NonNeg ? b.dim : 1);
    }
  }

  int dim() const { return dim_; }
  int degree() const { return degree_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  Vec identity() const {
    Vec e = Vec::Zero(dim_);
    for (const auto& b : blocks_) {
      if (b.kind == ConeKind::NonNeg) e.segment(b.off, b.dim).setOnes();
      else if (b.kind == ConeKind::SecondOrder) e(b.off) = 1.0;
      else if (b.kind == ConeKind::PsdReal)
        for (int i = 0; i < b.n; ++i) e(b.off + svec_index(i, i, b.n)) = 1.0;
      else
        for (int i = 0; i < b.n; ++i) e(b.off + hvec_index(i, i, b.n)) = 1.0;
    }
    return e;
  }

  // Smallest t with u + t e in the cone (max eigenvalue of -u).
  double min_shift(const Vec& u) const {
    double t = -std::numeric_limits<double>::infinity();
    for (const auto& b : blocks_) {
      const Vec seg = u.segment(b.off, b.dim);
      if (b.kind == ConeKind::NonNeg) t = std::max(t, -seg.minCoeff());
      else if (b.kind == ConeKind::SecondOrder) t = std::max(t, seg.tail(b.dim - 1).norm() - seg(0));
      else if (b.kind == ConeKind::PsdReal) t = std::max(t, -psd_min_eig<double>(seg, b.n));
      else t = std::max(t, -psd_min_eig<std::complex<double>>(seg, b.n));
    }
    return t;
  }

  bool compute_scaling(const Vec& s, const Vec& z, std::vector<BlockScaling>& out) const {
    out.resize(blocks_.size());
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      auto& w = out[i];
      const Vec ss = s.segment(b.off, b.dim);
      const Vec zz = z.segment(b.off, b.dim);
      if (b.kind == ConeKind::NonNeg) {
        if ((ss.array() <= 0.0).any() || (zz.array() <= 0.0).any()) return false;
        w.d = (ss.array() / zz.array()).sqrt();
        w.lambda = (ss.array() * zz.array()).sqrt();
      } else if (b.kind == ConeKind::SecondOrder) {
        const double sn = soc_jdot(ss, ss);
        const double zn = soc_jdot(zz, zz);
        if (!(sn > 0.0) || !(zn > 0.0) || ss(0) <= 0.0 || zz(0) <= 0.0) return false;
        const Vec sh = ss / std::sqrt(sn);
        const Vec zh = zz / std::sqrt(zn);
        const double gamma = std::sqrt(0.5 * (1.0 + zh.dot(sh)));
        const Vec wbar = (sh + soc_J(zh)) / (2.0 * gamma);
        w.v = wbar;
        w.v(0) += 1.0;
        w.v /= std::sqrt(2.0 * (wbar(0) + 1.0));
        w.beta = std::pow(sn / zn, 0.25);
        w.lambda = w.beta * (2.0 * w.v.dot(zz) * w.v - soc_J(zz));
        const Vec Jv = soc_J(w.v);
        Mat J = -Mat::Identity(b.dim, b.dim);
        J(0, 0) = 1.0;
        w.Wm = w.beta * (2.0 * w.v * w.v.transpose() - J);
        w.Winvm = (2.0 * Jv * Jv.transpose() - J) / w.beta;
      } else if (b.kind == ConeKind::PsdReal) {
        if (!psd_scaling<double>(ss, zz, b.n, b.dim, w.Wm, w.Winvm, w.lambda)) return false;
      } else {
        if (!psd_scaling<std::complex<double>>(ss, zz, b.n, b.dim, w.Wm, w.Winvm, w.lambda)) return false;
      }
    }
    return true;
  }

  // Scaling maps on one block.
  Vec apply_W(std::size_t i, const Vec& u, const std::vector<BlockScaling>& sc) const {
    if (blocks_[i].kind == ConeKind::NonNeg) return sc[i].d.cwiseProduct(u);
    return sc[i].Wm * u;
  }
  Vec apply_WT(std::size_t i, const Vec& u, const std::vector<BlockScaling>& sc) const {
    if (blocks_[i].kind == ConeKind::NonNeg) return sc[i].d.cwiseProduct(u);
    return sc[i].Wm.transpose() * u;
  }
  Vec apply_hinv(std::size_t i, const Vec& u, const std::vector<BlockScaling>& sc) const {
    if (blocks_[i].kind == ConeKind::NonNeg) return u.cwiseQuotient(sc[i].d.cwiseAbs2());
    return sc[i].Winvm * (sc[i].Winvm.transpose() * u);
  }
  Vec apply_wtw(std::size_t i, const Vec& u, const std::vector<BlockScaling>& sc) const {
    if (blocks_[i].kind == ConeKind::NonNeg) return sc[i].d.cwiseAbs2().cwiseProduct(u);
    return sc[i].Wm.transpose() * (sc[i].Wm * u);
  }

  // W^-T applied to every column of G's block rows.
  void scale_rows(std::size_t i, const Mat& Gb, const std::vector<BlockScaling>& sc, Eigen::Ref<Mat> out) const {
    if (blocks_[i].kind == ConeKind::NonNeg) out = sc[i].d.cwiseInverse().asDiagonal() * Gb;
    else out.noalias() = sc[i].Winvm.transpose() * Gb;
  }

  using Map = Vec (Cones::*)(std::size_t, const Vec&, const std::vector<BlockScaling>&) const;
  Vec apply(Map f, const Vec& u, const std::vector<BlockScaling>& sc) const {
    Vec out(dim_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      out.segment(b.off, b.dim) = (this->*f)(i, u.segment(b.off, b.dim), sc);
    }
    return out;
  }

  Vec lambda(const std::vector<BlockScaling>& sc) const {
    Vec out(dim_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) out.segment(blocks_[i].off, blocks_[i].dim) = sc[i].lambda;
    return out;
  }

  // Jordan product u o v.
  Vec jprod(const Vec& u, const Vec& v) const {
    Vec out(dim_);
    for (const auto& b : blocks_) {
      const Vec a = u.segment(b.off, b.dim);
      const Vec c = v.segment(b.off, b.dim);
      if (b.kind == ConeKind::NonNeg) out.segment(b.off, b.dim) = a.cwiseProduct(c);
      else if (b.kind == ConeKind::SecondOrder) {
        out(b.off) = a.dot(c);
        out.segment(b.off + 1, b.dim - 1) = a(0) * c.tail(b.dim - 1) + c(0) * a.tail(b.dim - 1);
      } else if (b.kind == ConeKind::PsdReal) {
        out.segment(b.off, b.dim) = psd_jprod<double>(a, c, b.n);
      } else {
        out.segment(b.off, b.dim) = psd_jprod<std::complex<double>>(a, c, b.n);
      }
    }
    return out;
  }

  // Solve lambda o w = r for w; lambda is the (diagonal on PSD blocks) scaled point.
  Vec jdiv(const Vec& lam, const Vec& r) const {
    Vec out(dim_);
    for (const auto& b : blocks_) {
      const Vec l = lam.segment(b.off, b.dim);
      const Vec q = r.segment(b.off, b.dim);
      if (b.kind == ConeKind::NonNeg) out.segment(b.off, b.dim) = q.cwiseQuotient(l);
      else if (b.kind == ConeKind::SecondOrder) {
        const double det = soc_jdot(l, l);
        const double w0 = (l(0) * q(0) - l.tail(b.dim - 1).dot(q.tail(b.dim - 1))) / det;
        out(b.off) = w0;
        out.segment(b.off + 1, b.dim - 1) = (q.tail(b.dim - 1) - w0 * l.tail(b.dim - 1)) / l(0);
      } else if (b.kind == ConeKind::PsdReal) {
        out.segment(b.off, b.dim) = psd_jdiv<double>(l, q, b.n);
      } else {
        out.segment(b.off, b.dim) = psd_jdiv<std::complex<double>>(l, q, b.n);
      }
    }
    return out;
  }

  // Largest step t with lam + t d in the cone (lam in the interior, diagonal on PSD blocks).
  double max_step(const Vec& lam, const Vec& dir) const {
    double t = std::numeric_limits<double>::infinity();
    for (const auto& b : blocks_) {
      const Vec l = lam.segment(b.off, b.dim);
      const Vec d = dir.segment(b.off, b.dim);
      if (b.kind == ConeKind::NonNeg) {
        for (int i = 0; i < b.dim; ++i)
          if (d(i) < 0.0) t = std::min(t, -l(i) / d(i));
      } else if (b.kind == ConeKind::SecondOrder) {
        t = std::min(t, soc_step(l, d));
      } else if (b.kind == ConeKind::PsdReal) {
        t = std::min(t, psd_step<double>(l, d, b.n));
      } else {
        t = std::min(t, psd_step<std::complex<double>>(l, d, b.n));
      }
    }
    return t;
  }

 private:
  static double soc_step(const Vec& u, const Vec& d) {
    const Eigen::Index k = u.size() - 1;
    if (d(0) - d.tail(k).norm() >= 0.0) return std::numeric_limits<double>::infinity();
    const double a = soc_jdot(d, d);
    const double bq = 2.0 * soc_jdot(u, d);
    const double c = soc_jdot(u, u);
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](double r) {
      if (r > 0.0) best = std::min(best, r);
    };
    if (a == 0.0) {
      if (bq < 0.0) consider(-c / bq);
      return best;
    }
    const double disc = bq * bq - 4.0 * a * c;
    if (disc < 0.0) return best;
    const double q = -0.5 * (bq + std::copysign(std::sqrt(disc), bq));
    if (q != 0.0) {
      consider(q / a);
      consider(c / q);
    }
    return best;
  }

  std::vector<Block> blocks_;
  int dim_ = 0;
  int degree_ = 0;
};

}  // namespace

ConicSolution solve_interior_point(const ConicProblem& p, const SolverSettings& st) {
  const auto n = static_cast<int>(p.c.size());
  const auto m = static_cast<int>(p.b.size());
  const Mat A_full = Mat(p.A);

  // Split rows into equality (zero cone) and conic parts.
  std::vector<int> eq_rows, cone_rows;
  std::vector<Block> blocks;
  {
    int off = 0;
    int coff = 0;
    for (const auto& blk : p.cones.blocks) {
      const int d = blk.dim();
      for (int i = 0; i < d; ++i) (blk.kind == ConeKind::Zero ? eq_rows : cone_rows).push_back(off + i);
      if (blk.kind != ConeKind::Zero) {
        blocks.push_back({blk.kind, blk.n, coff, d});
        coff += d;
      }
      off += d;
    }
  }
  const Cones K(std::move(blocks));
  const int p_eq = static_cast<int>(eq_rows.size());
  const int mc = K.dim();

  Mat Aeq(p_eq, n), G(mc, n);
  Vec beq(p_eq), h(mc);
  for (int i = 0; i < p_eq; ++i) {
    Aeq.row(i) = A_full.row(eq_rows[static_cast<std::size_t>(i)]);
    beq(i) = p.b(eq_rows[static_cast<std::size_t>(i)]);
  }
  for (int i = 0; i < mc; ++i) {
    G.row(i) = A_full.row(cone_rows[static_cast<std::size_t>(i)]);
    h(i) = p.b(cone_rows[static_cast<std::size_t>(i)]);
  }
  const Vec& c = p.c;

  ConicSolution sol;
  auto assemble = [&](const Vec& x, const Vec& s, const Vec& yeq, const Vec& z, double scale) {
    sol.x = x / scale;
    sol.s = Vec::Zero(m);
    sol.y = Vec::Zero(m);
    for (int i = 0; i < p_eq; ++i) sol.y(eq_rows[static_cast<std::size_t>(i)]) = yeq(i) / scale;
    for (int i = 0; i < mc; ++i) {
      sol.s(cone_rows[static_cast<std::size_t>(i)]) = s(i) / scale;
      sol.y(cone_rows[static_cast<std::size_t>(i)]) = z(i) / scale;
    }
  };

  // KKT solver for
  //   [0  Aeq' G'      ] [dx]   [r1]
  //   [Aeq 0   0       ] [dy] = [r2]
  //   [G   0  -W'W     ] [dz]   [r3]
  std::vector<BlockScaling> scal;
  bool identity_scaling = true;
  Mat Y(mc, n);
  Eigen::LLT<Mat> chol;
  Eigen::PartialPivLU<Mat> lu;
  bool use_lu = false;

  auto winv_winvT = [&](const Vec& u) -> Vec {
    if (identity_scaling) return u;
    return K.apply(&Cones::apply_hinv, u, scal);
  };

  auto factor = [&]() -> bool {
    if (identity_scaling) {
      Y = G;
    } else {
      for (std::size_t i = 0; i < K.blocks().size(); ++i) {
        const auto& b = K.blocks()[i];
        K.scale_rows(i, G.middleRows(b.off, b.dim), scal, Y.middleRows(b.off, b.dim));
      }
    }
    Mat H = Mat::Zero(n, n);
    H.selfadjointView<Eigen::Lower>().rankUpdate(Y.transpose());
    H.triangularView<Eigen::StrictlyUpper>() = H.transpose();
    const double reg = 1e-13 * std::max(1.0, H.diagonal().maxCoeff());
    if (p_eq == 0) {
      chol.compute(H + reg * Mat::Identity(n, n));
      use_lu = false;
      return chol.info() == Eigen::Success;
    }
    Mat Kkt = Mat::Zero(n + p_eq, n + p_eq);
    Kkt.topLeftCorner(n, n) = H + reg * Mat::Identity(n, n);
    Kkt.topRightCorner(n, p_eq) = Aeq.transpose();
    Kkt.bottomLeftCorner(p_eq, n) = Aeq;
    Kkt.bottomRightCorner(p_eq, p_eq) = -reg * Mat::Identity(p_eq, p_eq);
    lu.compute(Kkt);
    use_lu = true;
    return std::isfinite(lu.rcond()) && lu.rcond() > 1e-300;
  };

  auto kkt_solve_once = [&](const Vec& r1, const Vec& r2, const Vec& r3, Vec& dx, Vec& dy, Vec& dz) {
    const Vec t = winv_winvT(r3);
    const Vec rx = r1 + G.transpose() * t;
    if (!use_lu) {
      dx = chol.solve(rx);
      dy = Vec::Zero(0);
    } else {
      Vec rhs(n + p_eq);
      rhs << rx, r2;
      const Vec sol_xy = lu.solve(rhs);
      dx = sol_xy.head(n);
      dy = sol_xy.tail(p_eq);
    }
    dz = winv_winvT(G * dx - r3);
  };

  // W'W u, the (3,3) block of the unreduced system.
  auto wtw = [&](const Vec& u) -> Vec {
    if (identity_scaling) return u;
    return K.apply(&Cones::apply_wtw, u, scal);
  };

  // Reduced solve plus one step of iterative refinement against the full
  // system; the Schur complement loses accuracy near the boundary.
  auto kkt_solve = [&](const Vec& r1, const Vec& r2, const Vec& r3, Vec& dx, Vec& dy, Vec& dz) {
    kkt_solve_once(r1, r2, r3, dx, dy, dz);
    {
      Vec e1 = r1 - G.transpose() * dz;
      if (p_eq) e1 -= Aeq.transpose() * dy;
      const Vec e2 = r2 - Aeq * dx;
      const Vec e3 = r3 - (G * dx - wtw(dz));
      Vec cx, cy, cz;
      kkt_solve_once(e1, e2, e3, cx, cy, cz);
      dx += cx;
      if (p_eq) dy += cy;
      dz += cz;
    }
  };

  // Starting point.
  Vec x, yeq, z, s;
  double tau = 1.0, kappa = 1.0;
  if (!factor()) {
    sol.status = SolveStatus::MaxIter;
    assemble(Vec::Zero(n), Vec::Zero(mc), Vec::Zero(p_eq), Vec::Zero(mc), 1.0);
    return sol;
  }
  {
    Vec dy0, dz0;
    kkt_solve(Vec::Zero(n), beq, h, x, dy0, dz0);
    s = -dz0;
    Vec dx1;
    kkt_solve(-c, Vec::Zero(p_eq), Vec::Zero(mc), dx1, yeq, z);
    const Vec e = K.identity();
    const double ts = K.min_shift(s);
    if (ts >= -1e-8 * std::max(1.0, s.norm())) s += (1.0 + ts) * e;
    const double tz = K.min_shift(z);
    if (tz >= -1e-8 * std::max(1.0, z.norm())) z += (1.0 + tz) * e;
  }
  if (st.warm_start) {
    // Blend the hint with the centered start so the point stays interior.
    const auto& w = *st.warm_start;
    Vec ws(mc), wz(mc), wy(p_eq);
    for (int i = 0; i < mc; ++i) {
      ws(i) = w.s(cone_rows[static_cast<std::size_t>(i)]);
      wz(i) = w.y(cone_rows[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < p_eq; ++i) wy(i) = w.y(eq_rows[static_cast<std::size_t>(i)]);
    const Vec e = K.identity();
    const double shift = 1e-2 * std::max(1.0, std::max(ws.norm(), wz.norm()) / std::sqrt(std::max(1, K.degree())));
    const double ts = K.min_shift(ws);
    const double tz = K.min_shift(wz);
    x = w.x;
    yeq = wy;
    s = ws + (std::max(ts, 0.0) + shift) * e;
    z = wz + (std::max(tz, 0.0) + shift) * e;
  }

  const double resx0 = std::max(1.0, c.norm());
  const double resy0 = std::max(1.0, beq.norm());
  const double resz0 = std::max(1.0, h.norm());
  const int max_iter = std::min(st.max_iter, 200);
  const Vec e = K.identity();
  identity_scaling = false;
  ConicSolution best;
  double best_merit = std::numeric_limits<double>::infinity();

  for (int it = 0; it <= max_iter; ++it) {
    sol.iterations = it;
    // Residuals of the embedding.
    const Vec Fx = (p_eq ? Vec(Aeq.transpose() * yeq) : Vec::Zero(n)) + G.transpose() * z + c * tau;
    const Vec Fy = Aeq * x - beq * tau;
    const Vec Fz = G * x + s - h * tau;
    const double cx = c.dot(x);
    const double byz = beq.dot(yeq) + h.dot(z);
    const double Ft = kappa + cx + byz;

    assemble(x, s, yeq, z, tau);
    const Residuals r = residuals(p, A_full, sol.x, sol.s, sol.y);
    sol.primal_res = r.primal_res;
    sol.dual_res = r.dual_res;
    sol.gap = r.gap;
    sol.objective = r.objective;
    if (is_optimal(r, st.tol)) {
      sol.status = SolveStatus::Optimal;
      return sol;
    }
    // Near the boundary the Newton systems lose accuracy and the residuals can
    // climb back up; keep the best iterate and stop once they clearly diverge.
    // A shrinking tau against kappa means a certificate is forming, so keep going.
    const double merit = std::max({r.primal_res, r.dual_res, std::abs(r.gap) / (1.0 + std::abs(r.objective))});
    if (merit < best_merit) {
      best_merit = merit;
      best = sol;
    } else if (merit > 100.0 * best_merit && tau > kappa) {
      break;
    }
    // Certificates.
    if (byz < 0.0) {
      const Vec hx = (p_eq ? Vec(Aeq.transpose() * yeq) : Vec::Zero(n)) + G.transpose() * z;
      if (hx.norm() / resx0 <= st.tol * (-byz)) {
        assemble(Vec::Zero(n), Vec::Zero(mc), yeq, z, -byz);
        sol.x.setZero();
        sol.s.setZero();
        sol.status = SolveStatus::Infeasible;
        return sol;
      }
    }
    if (cx < 0.0) {
      const double res = std::max((Aeq * x).norm() / resy0, (G * x + s).norm() / resz0);
      if (res <= st.tol * (-cx)) {
        assemble(x, s, Vec::Zero(p_eq), Vec::Zero(mc), -cx);
        sol.y.setZero();
        sol.status = SolveStatus::Unbounded;
        return sol;
      }
    }
    if (it == max_iter) break;

    if (!K.compute_scaling(s, z, scal) || !factor()) break;
    const Vec lam = K.lambda(scal);
    const double mu = (s.dot(z) + tau * kappa) / (K.degree() + 1);

    Vec x1, y1, z1;
    kkt_solve(-c, beq, h, x1, y1, z1);
    const double den = -kappa / tau + c.dot(x1) + beq.dot(y1) + h.dot(z1);

    struct Step {
      Vec dx, dy, dz, ds_scaled, dz_scaled;
      double dtau, dkappa;
    };
    auto newton = [&](double eta, const Vec& rs, double rk) {
      Step d;
      const Vec ldiv = K.jdiv(lam, rs);
      Vec x2, y2, z2;
      kkt_solve(-eta * Fx, -eta * Fy, -eta * Fz - K.apply(&Cones::apply_WT, ldiv, scal), x2, y2, z2);
      d.dtau = (-eta * Ft - rk / tau - (c.dot(x2) + beq.dot(y2) + h.dot(z2))) / den;
      d.dx = x2 + d.dtau * x1;
      d.dy = y2 + d.dtau * y1;
      d.dz = z2 + d.dtau * z1;
      d.dz_scaled = K.apply(&Cones::apply_W, d.dz, scal);
      d.ds_scaled = ldiv - d.dz_scaled;
      d.dkappa = (rk - kappa * d.dtau) / tau;
      return d;
    };
    auto step_length = [&](const Step& d) {
      double a = std::min(K.max_step(lam, d.ds_scaled), K.max_step(lam, d.dz_scaled));
      if (d.dtau < 0.0) a = std::min(a, -tau / d.dtau);
      if (d.dkappa < 0.0) a = std::min(a, -kappa / d.dkappa);
      return a;
    };

    const Vec ll = K.jprod(lam, lam);
    const Step aff = newton(1.0, -ll, -tau * kappa);
    const double a_aff = std::min(1.0, step_length(aff));
    const double sigma = std::pow(1.0 - a_aff, 3);

    const Vec rs = -ll - K.jprod(aff.ds_scaled, aff.dz_scaled) + sigma * mu * e;
    const double rk = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
    const Step d = newton(1.0 - sigma, rs, rk);
    const double a = std::min(1.0, 0.99 * step_length(d));

    x += a * d.dx;
    if (p_eq) yeq += a * d.dy;
    z += a * d.dz;
    s += a * K.apply(&Cones::apply_WT, d.ds_scaled, scal);
    tau += a * d.dtau;
    kappa += a * d.dkappa;
    if (!(tau > 0.0) || !(kappa > 0.0) || !x.allFinite()) break;
  }
  if (best_merit < std::numeric_limits<double>::infinity()) {
    best.iterations = sol.iterations;
    sol = std::move(best);
  }
  sol.status = SolveStatus::MaxIter;
  return sol;
}

}  // namespace dcbf::detail
