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

#include "dcbf/bernstein.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

namespace dcbf {

namespace {

void check_hermitian(const Eigen::MatrixXcd& W) {
  if (W.rows() != W.cols()) throw std::invalid_argument("Gram matrix must be square");
  const double scale = std::max(1.0, W.cwiseAbs().maxCoeff());
  if ((W - W.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("Gram matrix must be Hermitian");
}

}  // namespace

Eigen::MatrixXcd interference_contrast(std::span<const Eigen::MatrixXcd> W, int k, double rate_R) {
  if (k < 0 || k >= static_cast<int>(W.size())) throw std::out_of_range("flow index out of range");
  const double inv_a = 1.0 / (std::exp2(rate_R) - 1.0);
  Eigen::MatrixXcd B = W[static_cast<std::size_t>(k)] * inv_a;
  for (std::size_t j = 0; j < W.size(); ++j) {
    check_hermitian(W[j]);
    if (static_cast<int>(j) != k) B -= W[j];
  }
  return B;
}

QuadFormTriple quadform_from_gram(const Eigen::RowVectorXcd& hhat_k, std::span<const Eigen::MatrixXcd> W,
                                  int k, double rate_R, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("quadform_from_gram: eps must lie in [0, 1]");
  const Eigen::MatrixXcd B = interference_contrast(W, k, rate_R);
  const Eigen::VectorXcd Bh = B * hhat_k.adjoint();
  QuadFormTriple t;
  t.M = eps * B;
  t.z = -std::sqrt(eps) * Bh;
  t.e = 1.0 - (hhat_k * Bh)(0).real();
  return t;
}

QuadFormTriple quadform_from_beams(const Eigen::RowVectorXcd& hhat_k, const BeamSet& w, int k, double rate_R,
                                   double eps) {
  std::vector<Eigen::MatrixXcd> W;
  W.reserve(static_cast<std::size_t>(w.w.cols()));
  for (int j = 0; j < w.w.cols(); ++j) W.emplace_back(w.w.col(j) * w.w.col(j).adjoint());
  return quadform_from_gram(hhat_k, W, k, rate_R, eps);
}

double s_plus(const Eigen::MatrixXcd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(M, Eigen::EigenvaluesOnly);
  return std::max(-es.eigenvalues()(0), 0.0);
}

double soc_norm(const Eigen::MatrixXcd& M, const Eigen::VectorXcd& z) {
  return std::sqrt(M.squaredNorm() + 2.0 * z.squaredNorm());
}

double bernstein_threshold(const Eigen::MatrixXcd& M, const Eigen::VectorXcd& z, double delta) {
  if (!(delta >= 0.0)) throw std::invalid_argument("bernstein_threshold: delta must be >= 0");
  return M.trace().real() - std::sqrt(2.0 * delta) * soc_norm(M, z) - delta * s_plus(M);
}

BernsteinCertificate conservative_feasible(const QuadFormTriple& t, double delta) {
  BernsteinCertificate c;
  c.delta = delta;
  c.threshold = bernstein_threshold(t.M, t.z, delta);
  c.slack = c.threshold - t.e;
  return c;
}

DeltaMax delta_max(double margin, double x, double y) {
  if (!(x >= 0.0) || !(y >= 0.0)) throw std::invalid_argument("delta_max: x and y must be >= 0");
  if (!(margin > 0.0)) return {0.0, false};
  // Positive root s of y s^2 + sqrt(2) x s - margin = 0, written without cancellation.
  const double disc = std::sqrt(2.0 * x * x + 4.0 * y * margin);
  const double denom = std::sqrt(2.0) * x + disc;
  if (!(denom > 0.0)) return {kDeltaCap, true};
  const double s = 2.0 * margin / denom;
  return {std::min(s * s, kDeltaCap), true};
}

}  // namespace dcbf
