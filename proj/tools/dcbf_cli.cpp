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

// dcbf: closed-loop simulation, sweeps, self-checks and decision benchmarks.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "dcbf/config.hpp"
#include "dcbf/harness.hpp"
#include "dcbf/validation.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

struct RunArgs {
  std::string config;
  std::string out;
  std::string manifest;
  long seed = -1;
  bool full_scale = false;
  bool record_timing = false;
  int workers = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dcbf::ConfigError("cannot open config file " + path, "", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_manifest(std::ostream& os, const std::string& command, const RunArgs& a, const std::string& config_text,
                    const dcbf::ExperimentConfig& ec, const dcbf::SweepResult& res) {
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << dcbf::fnv1a64(config_text);
  os << "command: " << command << '\n'
     << "dcbf_version: " << kVersion << '\n'
     << "csv_version: " << dcbf::kCsvVersion << '\n'
     << "eigen_version: " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n'
     << "compiler: " << __VERSION__ << '\n'
     << "config: " << a.config << '\n'
     << "config_fnv1a64: " << hash.str() << '\n'
     << "horizon: " << ec.horizon << '\n'
     << "warmup: " << ec.warmup << '\n'
     << "seeds:";
  for (auto s : ec.seeds) os << ' ' << s;
  os << '\n' << "axis: " << dcbf::to_string(ec.axis) << '\n' << "match_power: " << (ec.match_power ? 1 : 0) << '\n';
  for (const auto& c : res.calibrations)
    os << "calibration: " << dcbf::policy_name(c.knob.policy) << " target " << c.target_power << " pilot "
       << c.pilot_power << (c.matched ? " matched" : " unmatched") << '\n';
  os << "rows: " << res.rows.size() << '\n';
  for (const auto& e : res.errors) os << "error: " << e << '\n';
  if (res.budget_exceeded) os << "budget_exceeded: 1\n";
}

int run_experiment(const std::string& command, const RunArgs& a, bool single_point) {
  const std::string text = read_file(a.config);
  dcbf::ExperimentConfig ec = dcbf::parse_config(text);
  if (a.full_scale) ec.horizon = 100000;
  if (a.seed >= 0) ec.seeds = {static_cast<std::uint64_t>(a.seed)};
  if (a.record_timing) ec.record_timing = true;
  if (single_point) {
    ec.axis = dcbf::SweepAxis::None;
    ec.axis_values.clear();
  }
  ec.validate();

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + a.out);
    out = &file;
  }
  dcbf::write_csv_header(*out);
  dcbf::SweepOptions opts;
  opts.workers = a.workers;
  opts.on_row = [&](const dcbf::CsvRow& r) {
    dcbf::write_csv_row(*out, r);
    out->flush();
  };
  const dcbf::SweepResult res = dcbf::run_sweep(ec, opts);

  std::string manifest = a.manifest;
  if (manifest.empty() && !a.out.empty()) manifest = a.out + ".manifest";
  if (!manifest.empty()) {
    std::ofstream m(manifest, std::ios::binary);
    if (!m) throw std::runtime_error("cannot write " + manifest);
    write_manifest(m, command, a, text, ec, res);
  }
  for (const auto& e : res.errors) std::cerr << "error: " << e << '\n';
  return res.errors.empty() ? 0 : 1;
}

std::vector<dcbf::PolicyKind> parse_schemes(const std::vector<std::string>& names) {
  std::vector<dcbf::PolicyKind> out;
  for (const auto& n : names) out.push_back(dcbf::make_scheme(n, 0.1, 1.0, 1.0));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delay-aware beamforming under imperfect CSIT: simulator and checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Run every scheme and seed at the configured point");
  RunArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Run the configured sweep axis");
  for (auto [cmd, a] : {std::pair{sim, &sim_args}, std::pair{sweep, &sweep_args}}) {
    cmd->add_option("--config", a->config, "Experiment config (INI)")->required();
    cmd->add_option("--out", a->out, "CSV output path (default: stdout)");
    cmd->add_option("--manifest", a->manifest, "Run manifest path (default: <out>.manifest)");
    cmd->add_option("--seed", a->seed, "Override the config seeds with one seed")->check(CLI::NonNegativeNumber);
    cmd->add_flag("--full-scale", a->full_scale, "Use 1e5-slot horizons");
    cmd->add_flag("--record-timing", a->record_timing, "Fill decision_ms (outputs become run-dependent)");
    cmd->add_option("--workers", a->workers, "Worker threads (default: DCBF_WORKERS or cores)");
  }

  int vv_flows = 5;
  std::uint64_t vv_seed = 1;
  double vv_eps_low = 0.01, vv_eps_high = 0.4;
  std::string vv_out;
  auto* vv = app.add_subcommand("validate-value", "Fluid value function checks and the value-iteration oracle");
  vv->add_option("--flows", vv_flows, "Random flows for the ODE and asymptotic checks")->check(CLI::PositiveNumber);
  vv->add_option("--seed", vv_seed, "Seed");
  vv->add_option("--eps-low", vv_eps_low, "CSIT error for the main oracle comparison");
  vv->add_option("--eps-high", vv_eps_high, "CSIT error for the reported comparison");
  vv->add_option("--out", vv_out, "CSV of oracle vs approximation at eps-low");

  int vb_instances = 100;
  long vb_samples = 100000;
  std::uint64_t vb_seed = 1;
  auto* vb = app.add_subcommand("validate-bernstein", "Monte Carlo check of the outage certificate");
  vb->add_option("--instances", vb_instances, "Certified instances")->check(CLI::PositiveNumber);
  vb->add_option("--samples", vb_samples, "Monte Carlo draws per instance")->check(CLI::Range(1000L, 100000000L));
  vb->add_option("--seed", vb_seed, "Seed");

  std::vector<int> bench_K{2, 3};
  int bench_Nt = 3;
  int bench_states = 50;
  std::vector<std::string> bench_schemes{"proposed", "capb", "fpb", "rb"};
  std::uint64_t bench_seed = 1;
  bool bench_no_oracle = false;
  double bench_eps = 0.1;
  auto* bench = app.add_subcommand("bench", "Per-decision wall-clock time by scheme and K");
  bench->add_option("--K", bench_K, "Flow counts")->delimiter(',');
  bench->add_option("--Nt", bench_Nt, "Antennas")->check(CLI::PositiveNumber);
  bench->add_option("--states", bench_states, "Observed states per (K, scheme)")->check(CLI::PositiveNumber);
  bench->add_option("--schemes", bench_schemes, "Schemes")->delimiter(',');
  bench->add_option("--eps", bench_eps, "CSIT error variance");
  bench->add_option("--seed", bench_seed, "Seed");
  bench->add_flag("--no-oracle", bench_no_oracle, "Skip the value-iteration timing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return run_experiment("simulate", sim_args, true);
    if (sweep->parsed()) return run_experiment("sweep", sweep_args, false);
    if (vv->parsed()) {
      const auto rep = dcbf::run_value_suite(vv_flows, vv_seed, vv_eps_low, vv_eps_high);
      dcbf::write_value_summary(rep, std::cout);
      if (!vv_out.empty()) {
        std::ofstream f(vv_out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + vv_out);
        dcbf::write_value_csv(rep.low, f);
      }
      return 0;
    }
    if (vb->parsed()) {
      const auto rep = dcbf::run_bernstein_suite(vb_instances, vb_samples, vb_seed);
      dcbf::write_bernstein_summary(rep, std::cout);
      return 0;
    }
    if (bench->parsed()) {
      dcbf::FlowParams flow;
      flow.eps = bench_eps;
      flow.validate();
      const auto rep = dcbf::bench_decision_time(bench_K, bench_Nt, parse_schemes(bench_schemes), flow, bench_states,
                                                 bench_seed, !bench_no_oracle);
      dcbf::write_bench(rep, std::cout);
      return 0;
    }
  } catch (const dcbf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
