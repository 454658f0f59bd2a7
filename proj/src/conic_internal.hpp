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

#include "dcbf/conic.hpp"

namespace dcbf::detail {

struct Residuals {
  double primal_res = 0.0;
  double dual_res = 0.0;
  double gap = 0.0;
  double objective = 0.0;
};

Residuals residuals(const ConicProblem& p, const Eigen::MatrixXd& A, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& s, const Eigen::VectorXd& y);

bool is_optimal(const Residuals& r, double tol);

/// Projection of a single block in place. dual = true projects onto the dual cone.
void project_block(Eigen::Ref<Eigen::VectorXd> v, const ConeBlock& blk, bool dual);

ConicSolution solve_operator_splitting(const ConicProblem& p, const SolverSettings& st);
ConicSolution solve_interior_point(const ConicProblem& p, const SolverSettings& st);

}  // namespace dcbf::detail
