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
#include <complex>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "conic_internal.hpp"

namespace dcbf {

int ConeSpec::dim() const {
  int d = 0;
  for (const auto& b : blocks) d += b.dim();
  return d;
}

ConeSpec& ConeSpec::add(ConeKind kind, int n) {
  if (n < 1) throw std::invalid_argument("cone block size must be >= 1");
  blocks.push_back({kind, n});
  return *this;
}

void ConicProblem::validate() const {
  const auto m = A.rows();
  if (A.cols() != c.size()) throw std::invalid_argument("ConicProblem: A has " + std::to_string(A.cols()) +
                                                        " columns but c has " + std::to_string(c.size()));
  if (b.size() != m) throw std::invalid_argument("ConicProblem: b size does not match rows of A");
  for (const auto& blk : cones.blocks)
    if (blk.n < 1) throw std::invalid_argument("ConicProblem: empty cone block");
  if (cones.dim() != m)
    throw std::invalid_argument("ConicProblem: cone dimension " + std::to_string(cones.dim()) +
                                " does not match " + std::to_string(m) + " rows");
  // A zero row in a zero or nonnegative block is either vacuous or infeasible.
  // Second-order and PSD blocks may carry constant entries (for instance the
  // identically zero Im-diagonal of a Hermitian embedding).
  Eigen::VectorXi nnz_per_row = Eigen::VectorXi::Zero(m);
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      if (it.value() != 0.0) ++nnz_per_row(it.row());
  int off = 0;
  for (const auto& blk : cones.blocks) {
    if (blk.kind == ConeKind::Zero || blk.kind == ConeKind::NonNeg)
      for (int i = off; i < off + blk.dim(); ++i)
        if (nnz_per_row(i) == 0) throw std::invalid_argument("ConicProblem: row " + std::to_string(i) + " of A is zero");
    off += blk.dim();
  }
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::MaxIter: return "max_iter";
  }
  return "unknown";
}

int svec_index(int i, int j, int n) {
  // Column-major lower triangle: column j starts after sum_{c<j} (n - c) entries.
  return j * n - j * (j - 1) / 2 + (i - j);
}

Eigen::VectorXd svec(const Eigen::MatrixXd& S) {
  const int n = static_cast<int>(S.rows());
  Eigen::VectorXd v(n * (n + 1) / 2);
  int idx = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) v(idx++) = (i == j) ? S(i, j) : std::sqrt(2.0) * S(i, j);
  return v;
}

Eigen::MatrixXd smat(const Eigen::VectorXd& v, int n) {
  if (v.size() != n * (n + 1) / 2) throw std::invalid_argument("smat: length mismatch");
  Eigen::MatrixXd S(n, n);
  int idx = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) {
      const double val = (i == j) ? v(idx) : v(idx) / std::sqrt(2.0);
      S(i, j) = val;
      S(j, i) = val;
      ++idx;
    }
  return S;
}

int hvec_index(int i, int j, int n) {
  // Column c holds 1 + 2 (n - 1 - c) reals.
  const int start = j + 2 * j * (n - 1) - j * (j - 1);
  return i == j ? start : start + 1 + 2 * (i - j - 1);
}

Eigen::VectorXd hvec(const Eigen::MatrixXcd& H) {
  const int n = static_cast<int>(H.rows());
  Eigen::VectorXd v(n * n);
  int idx = 0;
  for (int j = 0; j < n; ++j) {
    v(idx++) = H(j, j).real();
    for (int i = j + 1; i < n; ++i) {
      v(idx++) = std::sqrt(2.0) * H(i, j).real();
      v(idx++) = std::sqrt(2.0) * H(i, j).imag();
    }
  }
  return v;
}

Eigen::MatrixXcd hmat(const Eigen::VectorXd& v, int n) {
  if (v.size() != n * n) throw std::invalid_argument("hmat: length mismatch");
  Eigen::MatrixXcd H(n, n);
  int idx = 0;
  for (int j = 0; j < n; ++j) {
    H(j, j) = v(idx++);
    for (int i = j + 1; i < n; ++i) {
      const std::complex<double> val(v(idx) / std::sqrt(2.0), v(idx + 1) / std::sqrt(2.0));
      idx += 2;
      H(i, j) = val;
      H(j, i) = std::conj(val);
    }
  }
  return H;
}

Eigen::VectorXd project_soc(const Eigen::VectorXd& v) {
  if (v.size() < 1) throw std::invalid_argument("project_soc: empty vector");
  Eigen::VectorXd out = v;
  detail::project_block(out, {ConeKind::SecondOrder, static_cast<int>(v.size())}, false);
  return out;
}

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& S) {
  if (S.rows() != S.cols()) throw std::invalid_argument("project_psd: matrix must be square");
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("project_psd: matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd hermitian_embed(const Eigen::MatrixXcd& H) {
  const auto n = H.rows();
  if (H.cols() != n) throw std::invalid_argument("hermitian_embed: matrix must be square");
  Eigen::MatrixXd E(2 * n, 2 * n);
  E.topLeftCorner(n, n) = H.real();
  E.topRightCorner(n, n) = -H.imag();
  E.bottomLeftCorner(n, n) = H.imag();
  E.bottomRightCorner(n, n) = H.real();
  return E;
}

namespace detail {

void project_block(Eigen::Ref<Eigen::VectorXd> v, const ConeBlock& blk, bool dual) {
  switch (blk.kind) {
    case ConeKind::Zero:
      if (!dual) v.setZero();
      return;
    case ConeKind::NonNeg:
      v = v.cwiseMax(0.0);
      return;
    case ConeKind::SecondOrder: {
      const double t = v(0);
      const double nu = v.tail(v.size() - 1).norm();
      if (nu <= t) return;
      if (nu <= -t) {
        v.setZero();
        return;
      }
      const double a = 0.5 * (t + nu);
      v(0) = a;
      v.tail(v.size() - 1) *= a / nu;
      return;
    }
    case ConeKind::PsdReal: {
      const int n = blk.n;
      if (n == 1) {
        v(0) = std::max(v(0), 0.0);
        return;
      }
      const Eigen::MatrixXd S = smat(v, n);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
      const Eigen::VectorXd& lam = es.eigenvalues();
      if (lam(0) >= 0.0) return;
      Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i)
        if (lam(i) > 0.0) P.noalias() += lam(i) * es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose();
      v = svec(P);
      return;
    }
    case ConeKind::PsdHermitian: {
      const int n = blk.n;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hmat(v, n));
      const Eigen::VectorXd& lam = es.eigenvalues();
      if (lam(0) >= 0.0) return;
      Eigen::MatrixXcd P = Eigen::MatrixXcd::Zero(n, n);
      for (int i = 0; i < n; ++i)
        if (lam(i) > 0.0) P.noalias() += lam(i) * es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
      v = hvec(P);
      return;
    }
  }
}

Residuals residuals(const ConicProblem& p, const Eigen::MatrixXd& A, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
  Residuals r;
  r.objective = p.c.dot(x);
  r.primal_res = (A * x + s - p.b).norm() / (1.0 + p.b.norm());
  r.dual_res = (A.transpose() * y + p.c).norm() / (1.0 + p.c.norm());
  r.gap = r.objective + p.b.dot(y);
  return r;
}

bool is_optimal(const Residuals& r, double tol) {
  return r.primal_res <= tol && r.dual_res <= tol && std::abs(r.gap) <= tol * (1.0 + std::abs(r.objective));
}

}  // namespace detail

Eigen::VectorXd project_cone(const Eigen::VectorXd& v, const ConeSpec& cones, bool dual) {
  if (v.size() != cones.dim()) throw std::invalid_argument("project_cone: dimension mismatch");
  Eigen::VectorXd out = v;
  int off = 0;
  for (const auto& blk : cones.blocks) {
    detail::project_block(out.segment(off, blk.dim()), blk, dual);
    off += blk.dim();
  }
  return out;
}

double cone_distance(const Eigen::VectorXd& v, const ConeSpec& cones) {
  return (v - project_cone(v, cones, false)).norm();
}

ConicSolution solve(const ConicProblem& p, const SolverSettings& settings) {
  p.validate();
  if (!(settings.tol > 0.0)) throw std::invalid_argument("solve: tol must be > 0");
  if (settings.max_iter < 1) throw std::invalid_argument("solve: max_iter must be >= 1");
  if (settings.warm_start) {
    const auto& w = *settings.warm_start;
    if (w.x.size() != p.c.size() || w.s.size() != p.b.size() || w.y.size() != p.b.size())
      throw std::invalid_argument("solve: warm start has the wrong shape");
  }
  return settings.method == SolverMethod::InteriorPoint ? detail::solve_interior_point(p, settings)
                                                        : detail::solve_operator_splitting(p, settings);
}

ConicSolution solve(const ConicProblem& p, double tol, int max_iter) {
  SolverSettings st;
  st.tol = tol;
  st.max_iter = max_iter;
  return solve(p, st);
}

void dump_problem(const ConicProblem& p, std::ostream& os) {
  os << std::setprecision(17);
  os << "# cone program: minimize c'x s.t. A x + s = b, s in K\n";
  os << "n " << p.c.size() << "\nm " << p.b.size() << "\n";
  os << "c";
  for (Eigen::Index i = 0; i < p.c.size(); ++i) os << ' ' << p.c(i);
  os << "\nb";
  for (Eigen::Index i = 0; i < p.b.size(); ++i) os << ' ' << p.b(i);
  os << "\nA_nnz " << p.A.nonZeros() << "\n";
  for (int k = 0; k < p.A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(p.A, k); it; ++it)
      os << it.row() << ' ' << it.col() << ' ' << it.value() << "\n";
  os << "cones " << p.cones.blocks.size() << "\n";
  for (const auto& blk : p.cones.blocks) {
    switch (blk.kind) {
      case ConeKind::Zero: os << "zero "; break;
      case ConeKind::NonNeg: os << "nonneg "; break;
      case ConeKind::SecondOrder: os << "soc "; break;
      case ConeKind::PsdReal: os << "psd_svec "; break;
      case ConeKind::PsdHermitian: os << "hpsd_hvec "; break;
    }
    os << blk.n << "\n";
  }
}

}  // namespace dcbf
