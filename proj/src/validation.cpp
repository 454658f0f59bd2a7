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

#include "dcbf/validation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "dcbf/bernstein.hpp"
#include "dcbf/fluid_value.hpp"

namespace dcbf {

FlowParams random_stable_flow(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FlowParams f;
  f.rate_R = 0.2 + 0.8 * u(rng);
  f.lambda = f.rate_R * (0.2 + 0.6 * u(rng));
  f.gamma = 0.5 + 4.5 * u(rng);
  f.eps = 0.0;
  return f;
}

ValueSuiteReport run_value_suite(int n_flows, std::uint64_t seed, double eps_low, double eps_high) {
  if (n_flows < 1) throw std::invalid_argument("run_value_suite: need at least one flow");
  Rng rng = derive_stream(seed, 1);
  ValueSuiteReport rep;
  rep.min_asymptotic_ratio = std::numeric_limits<double>::infinity();
  rep.max_asymptotic_ratio = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_flows; ++i) {
    const FlowParams f = random_stable_flow(rng);
    rep.flows.push_back(f);
    const PerFlowFluid pf(f);
    for (int j = 0; j < 100; ++j) {
      const double y = pf.y0() * std::pow(1e3, j / 99.0);
      rep.max_ode_residual = std::max(rep.max_ode_residual, std::abs(pf.ode_residual(y)));
    }
    const double q = 1e3;
    const double ratio = pf.value(q) * 2.0 * f.lambda * (f.rate_R - f.lambda) / (f.gamma * q * q);
    rep.min_asymptotic_ratio = std::min(rep.min_asymptotic_ratio, ratio);
    rep.max_asymptotic_ratio = std::max(rep.max_asymptotic_ratio, ratio);
  }

  rep.eps_low = eps_low;
  rep.eps_high = eps_high;
  auto oracle = [&](double eps, RviResult& rvi) {
    SystemConfig cfg;
    cfg.K = 2;
    cfg.Nt = 2;
    FlowParams f;
    f.eps = eps;
    const std::vector<FlowParams> flows{f, f};
    Rng mdp_rng = derive_stream(seed, 2);
    const DiscretizedMdp mdp(cfg, flows, MdpOptions{}, mdp_rng);
    rvi = relative_value_iteration(mdp);
    if (!rvi.converged) throw std::runtime_error("run_value_suite: value iteration did not converge");
    return compare_value_functions(mdp, rvi.V, ApproxValue(flows));
  };
  rep.low = oracle(eps_low, rep.rvi_low);
  rep.high = oracle(eps_high, rep.rvi_high);
  return rep;
}

void write_value_summary(const ValueSuiteReport& rep, std::ostream& os) {
  os << "flows: " << rep.flows.size() << '\n'
     << "max |ode residual|: " << rep.max_ode_residual << '\n'
     << "asymptotic ratio at q=1e3: [" << rep.min_asymptotic_ratio << ", " << rep.max_asymptotic_ratio << "]\n"
     << "value oracle eps=" << rep.eps_low << ": spearman " << rep.low.spearman << ", max rel deviation "
     << rep.low.max_rel_deviation << ", theta " << rep.rvi_low.theta << ", sweeps " << rep.rvi_low.sweeps << '\n'
     << "value oracle eps=" << rep.eps_high << ": spearman " << rep.high.spearman << ", max rel deviation "
     << rep.high.max_rel_deviation << ", theta " << rep.rvi_high.theta << ", sweeps " << rep.rvi_high.sweeps
     << '\n';
}

BernsteinSuiteReport run_bernstein_suite(int instances, long samples, std::uint64_t seed) {
  if (instances < 1) throw std::invalid_argument("run_bernstein_suite: need at least one instance");
  Rng rng = derive_stream(seed, 3);
  Rng mc = derive_stream(seed, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BernsteinSuiteReport rep;
  rep.worst_z = std::numeric_limits<double>::infinity();
  while (static_cast<int>(rep.instances.size()) < instances) {
    BernsteinInstance inst;
    inst.K = 2 + static_cast<int>(u(rng) * 2.0);
    inst.Nt = inst.K + static_cast<int>(u(rng) * 2.0);
    inst.eps = 0.02 + 0.28 * u(rng);
    FlowParams flow;
    flow.rate_R = 0.3 + 0.7 * u(rng);
    flow.eps = inst.eps;
    const Eigen::RowVectorXcd hhat = complex_gaussian(rng, 1, inst.Nt, 1.0 - inst.eps);
    BeamSet beams{complex_gaussian(rng, inst.Nt, inst.K, 0.1)};

    // Grow the served beam until the margin is positive and a useful delta is certified.
    DeltaMax dm;
    for (int i = 0; i < 40; ++i) {
      const QuadFormTriple t = quadform_from_beams(hhat, beams, 0, flow.rate_R, inst.eps);
      dm = delta_max(t.M.trace().real() - t.e, soc_norm(t.M, t.z), s_plus(t.M));
      if (dm.guaranteed && dm.delta >= 0.5) break;
      beams.w.col(0) *= std::sqrt(2.0);
    }
    if (!dm.guaranteed || dm.delta < 0.5) continue;
    inst.delta = 0.5 + (std::min(dm.delta, 6.0) - 0.5) * u(rng);
    const QuadFormTriple t = quadform_from_beams(hhat, beams, 0, flow.rate_R, inst.eps);
    if (!conservative_feasible(t, inst.delta).feasible()) throw std::logic_error("run_bernstein_suite: certificate");

    const PerEstimate per = mc_conditional_per(hhat, beams, 0, flow, samples, mc);
    const double rho = std::exp(-inst.delta);
    inst.target_success = 1.0 - rho;
    inst.mc_success = 1.0 - per.p_hat;
    inst.sigma = std::sqrt(rho * (1.0 - rho) / static_cast<double>(samples));
    inst.violated = inst.mc_success < inst.target_success - 3.0 * inst.sigma;
    if (inst.violated) ++rep.violations;
    rep.worst_z = std::min(rep.worst_z, (inst.mc_success - inst.target_success) / inst.sigma);
    rep.instances.push_back(inst);
  }
  return rep;
}

void write_bernstein_summary(const BernsteinSuiteReport& rep, std::ostream& os) {
  os << "instances: " << rep.instances.size() << '\n'
     << "conservativeness violations: " << rep.violations << '\n'
     << "worst (mc - target) / sigma: " << rep.worst_z << '\n';
}

}  // namespace dcbf
