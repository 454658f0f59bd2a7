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

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace dcbf {

// Standard-form cone program
//
//   minimize    c'x
//   subject to  A x + s = b,   s in K = K_1 x ... x K_p
//
// with dual  maximize -b'y  subject to  A'y + c = 0,  y in K*.
//
// PsdReal(n) blocks hold a symmetric n x n matrix as its scaled lower
// triangle (column-major, off-diagonals times sqrt(2)), so the vector inner
// product equals the trace inner product. PsdHermitian(n) blocks hold a
// Hermitian n x n matrix the same way, with each strictly lower entry stored
// as the pair (sqrt(2) Re, sqrt(2) Im): n^2 reals in total.

enum class ConeKind { Zero, NonNeg, SecondOrder, PsdReal, PsdHermitian };

struct ConeBlock {
  ConeKind kind;
  int n;  // length, or side length for the PSD kinds

  int dim() const {
    if (kind == ConeKind::PsdReal) return n * (n + 1) / 2;
    if (kind == ConeKind::PsdHermitian) return n * n;
    return n;
  }
};

struct ConeSpec {
  std::vector<ConeBlock> blocks;

  int dim() const;
  ConeSpec& zero(int n) { return add(ConeKind::Zero, n); }
  ConeSpec& nonneg(int n) { return add(ConeKind::NonNeg, n); }
  ConeSpec& soc(int n) { return add(ConeKind::SecondOrder, n); }
  ConeSpec& psd(int n) { return add(ConeKind::PsdReal, n); }
  ConeSpec& hpsd(int n) { return add(ConeKind::PsdHermitian, n); }

 private:
  ConeSpec& add(ConeKind kind, int n);
};

struct ConicProblem {
  Eigen::VectorXd c;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  ConeSpec cones;

  /// Throws std::invalid_argument on inconsistent sizes, empty blocks, or
  /// all-zero rows inside zero or nonnegative blocks.
  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter };

std::string to_string(SolveStatus s);

struct ConicSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  SolveStatus status = SolveStatus::MaxIter;
  double primal_res = 0.0;  // ||Ax + s - b|| / (1 + ||b||)
  double dual_res = 0.0;    // ||A'y + c|| / (1 + ||c||)
  double gap = 0.0;         // c'x + b'y
  double objective = 0.0;   // c'x
  int iterations = 0;
  bool restarted = false;
};

enum class SolverMethod { OperatorSplitting, InteriorPoint };

struct SolverSettings {
  double tol = 1e-7;
  int max_iter = 20000;
  SolverMethod method = SolverMethod::OperatorSplitting;
  // Operator splitting only.
  double relaxation = 1.5;
  int check_every = 10;
  int stall_window = 500;
  bool equilibrate = true;
  // Optional initial point (x, s, y of a previous solve with the same shape).
  const ConicSolution* warm_start = nullptr;
};

ConicSolution solve(const ConicProblem& p, const SolverSettings& settings = {});
ConicSolution solve(const ConicProblem& p, double tol, int max_iter = 20000);

// Cone utilities. Vectors are in the block layout described above.

Eigen::VectorXd project_soc(const Eigen::VectorXd& v);
Eigen::MatrixXd project_psd(const Eigen::MatrixXd& S);
/// [[Re H, -Im H], [Im H, Re H]]. Its spectrum is that of H with doubled
/// multiplicity, so its trace is twice Tr H.
Eigen::MatrixXd hermitian_embed(const Eigen::MatrixXcd& H);

Eigen::VectorXd svec(const Eigen::MatrixXd& S);
Eigen::MatrixXd smat(const Eigen::VectorXd& v, int n);
int svec_index(int i, int j, int n);  // i >= j

Eigen::VectorXd hvec(const Eigen::MatrixXcd& H);
Eigen::MatrixXcd hmat(const Eigen::VectorXd& v, int n);
/// Position of entry (i, j), i >= j, in hvec; the imaginary part follows at +1 when i > j.
int hvec_index(int i, int j, int n);

/// Projection onto K (dual = false) or onto K* (dual = true).
Eigen::VectorXd project_cone(const Eigen::VectorXd& v, const ConeSpec& cones, bool dual = false);
/// Euclidean distance from v to K.
double cone_distance(const Eigen::VectorXd& v, const ConeSpec& cones);

/// Plain-text dump: dimensions, objective, (row, col, value) triplets of A, b, cone list.
void dump_problem(const ConicProblem& p, std::ostream& os);

}  // namespace dcbf
