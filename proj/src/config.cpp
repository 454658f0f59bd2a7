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

#include "dcbf/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace dcbf {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Line numbers of "section.key" entries and of section headers.
std::map<std::string, int> index_lines(const std::string& text) {
  std::map<std::string, int> lines;
  std::istringstream in(text);
  std::string line;
  std::string section;
  for (int n = 1; std::getline(in, line); ++n) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';' || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      lines.emplace(section, n);
      continue;
    }
    const auto eq = t.find('=');
    if (eq != std::string::npos) lines.emplace(section + "." + trim(t.substr(0, eq)), n);
  }
  return lines;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"system", {"K", "Nt", "tau", "bw", "packet_bits"}},
      {"flows", {"rate", "lambda", "gamma", "eps"}},
      {"policy", {"schemes", "rho0", "beta", "total_power"}},
      {"sweep",
       {"horizon", "warmup", "seeds", "axis", "values", "match_power", "pilot_horizon", "pilot_seed",
        "full_scale", "record_timing"}},
  };
  return keys;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::map<std::string, int> lines) : tree_(tree), lines_(std::move(lines)) {}

  int line_of(const std::string& key) const {
    const auto it = lines_.find(key);
    return it == lines_.end() ? 0 : it->second;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const int line = line_of(key);
    std::string msg = key + ": " + what;
    if (line > 0) msg = "line " + std::to_string(line) + ": " + msg;
    throw ConfigError(msg, key, line);
  }

  std::optional<std::string> raw(const std::string& key) const {
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  std::string required(const std::string& key) const {
    auto v = raw(key);
    if (!v) throw ConfigError("missing required key " + key, key, 0);
    if (v->empty()) fail(key, "empty value");
    return *v;
  }

  double to_double(const std::string& key, const std::string& text) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) fail(key, "not a number: '" + text + "'");
      return v;
    } catch (const std::logic_error&) {
      fail(key, "not a number: '" + text + "'");
    }
  }

  long to_long(const std::string& key, const std::string& text) const {
    try {
      std::size_t used = 0;
      const long v = std::stol(text, &used);
      if (used != text.size()) fail(key, "not an integer: '" + text + "'");
      return v;
    } catch (const std::logic_error&) {
      fail(key, "not an integer: '" + text + "'");
    }
  }

  bool to_bool(const std::string& key, const std::string& text) const {
    const std::string t = lower(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    fail(key, "not a boolean: '" + text + "'");
  }

  std::vector<std::string> list(const std::string& text) const {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
  }

  double number(const std::string& key, double fallback) const {
    const auto v = raw(key);
    return v ? to_double(key, *v) : fallback;
  }

  long integer(const std::string& key, long fallback) const {
    const auto v = raw(key);
    return v ? to_long(key, *v) : fallback;
  }

  bool flag(const std::string& key, bool fallback) const {
    const auto v = raw(key);
    return v ? to_bool(key, *v) : fallback;
  }

  /// One value for every flow, or exactly K of them.
  std::vector<double> per_flow(const std::string& key, int K) const {
    const auto items = list(required(key));
    std::vector<double> out;
    for (const auto& it : items) out.push_back(to_double(key, it));
    if (out.size() == 1) out.assign(static_cast<std::size_t>(K), out.front());
    if (static_cast<int>(out.size()) != K)
      fail(key, "expected 1 or " + std::to_string(K) + " values, got " + std::to_string(items.size()));
    return out;
  }

 private:
  const pt::ptree& tree_;
  std::map<std::string, int> lines_;
};

SweepAxis parse_axis(const Reader& r, const std::string& key, const std::string& text) {
  const std::string t = lower(text);
  if (t == "none") return SweepAxis::None;
  if (t == "gamma") return SweepAxis::Gamma;
  if (t == "lambda") return SweepAxis::Lambda;
  if (t == "k") return SweepAxis::K;
  if (t == "power") return SweepAxis::Power;
  r.fail(key, "unknown axis '" + text + "' (none, gamma, lambda, K, power)");
}

}  // namespace

ConfigError::ConfigError(const std::string& msg, std::string k, int l)
    : std::runtime_error(msg), key(std::move(k)), line(l) {}

PolicyKind make_scheme(const std::string& name, double rho0, double beta, double total_power) {
  const std::string n = lower(trim(name));
  PolicyKind kind;
  if (n == "proposed")
    kind = Proposed{};
  else if (n == "capb")
    kind = CsitAdaptivePer{beta};
  else if (n == "fpb")
    kind = FixedPer{rho0};
  else if (n == "rb")
    kind = RandomBeam{total_power};
  else
    throw std::invalid_argument("unknown scheme '" + name + "' (proposed, capb, fpb, rb)");
  validate_policy(kind);
  return kind;
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message(), "", static_cast<int>(e.line()));
  }
  const Reader r(tree, index_lines(text));

  for (const auto& [section, body] : tree) {
    const auto known = known_keys().find(section);
    if (known == known_keys().end()) r.fail(section, "unknown section");
    for (const auto& [key, value] : body)
      if (!known->second.count(key)) r.fail(section + "." + key, "unknown key");
  }

  ExperimentConfig ec;
  ec.cfg.K = static_cast<int>(r.to_long("system.K", r.required("system.K")));
  ec.cfg.Nt = static_cast<int>(r.to_long("system.Nt", r.required("system.Nt")));
  if (ec.cfg.K < 1) r.fail("system.K", "must be >= 1");
  if (ec.cfg.Nt < 1) r.fail("system.Nt", "must be >= 1");
  ec.cfg.tau = r.number("system.tau", ec.cfg.tau);
  ec.cfg.bw = r.number("system.bw", ec.cfg.bw);
  ec.cfg.packet_bits = r.number("system.packet_bits", ec.cfg.packet_bits);
  try {
    ec.cfg.validate();
  } catch (const std::invalid_argument& e) {
    r.fail("system", e.what());
  }

  const int K = ec.cfg.K;
  const auto rate = r.per_flow("flows.rate", K);
  const auto lambda = r.per_flow("flows.lambda", K);
  const auto gamma = r.per_flow("flows.gamma", K);
  const auto eps = r.per_flow("flows.eps", K);
  for (int k = 0; k < K; ++k) {
    FlowParams f{rate[k], lambda[k], gamma[k], eps[k]};
    try {
      f.validate();
    } catch (const std::invalid_argument& e) {
      r.fail("flows", "flow " + std::to_string(k) + ": " + e.what());
    }
    ec.flows.push_back(f);
  }

  const double rho0 = r.number("policy.rho0", 0.1);
  const double beta = r.number("policy.beta", 1.0);
  const double total_power = r.number("policy.total_power", 1.0);
  for (const auto& name : r.list(r.required("policy.schemes"))) {
    try {
      ec.schemes.push_back(make_scheme(name, rho0, beta, total_power));
    } catch (const std::invalid_argument& e) {
      r.fail("policy.schemes", e.what());
    }
  }

  if (r.flag("sweep.full_scale", false)) ec.horizon = 100000;
  ec.horizon = r.integer("sweep.horizon", ec.horizon);
  ec.warmup = r.integer("sweep.warmup", ec.warmup);
  if (ec.horizon < 1) r.fail("sweep.horizon", "must be >= 1");
  if (ec.warmup < 0 || ec.warmup >= ec.horizon) r.fail("sweep.warmup", "must satisfy 0 <= warmup < horizon");
  if (const auto seeds = r.raw("sweep.seeds")) {
    ec.seeds.clear();
    for (const auto& s : r.list(*seeds)) {
      const long v = r.to_long("sweep.seeds", s);
      if (v < 0) r.fail("sweep.seeds", "seeds must be nonnegative");
      ec.seeds.push_back(static_cast<std::uint64_t>(v));
    }
    if (ec.seeds.empty()) r.fail("sweep.seeds", "need at least one seed");
  }
  if (const auto axis = r.raw("sweep.axis")) ec.axis = parse_axis(r, "sweep.axis", *axis);
  if (const auto values = r.raw("sweep.values"))
    for (const auto& v : r.list(*values)) ec.axis_values.push_back(r.to_double("sweep.values", v));
  if (ec.axis != SweepAxis::None && ec.axis_values.empty()) r.fail("sweep.values", "axis set but no values given");
  ec.match_power = r.flag("sweep.match_power", ec.match_power);
  ec.pilot_horizon = r.integer("sweep.pilot_horizon", ec.pilot_horizon);
  ec.pilot_seed = static_cast<std::uint64_t>(r.integer("sweep.pilot_seed", static_cast<long>(ec.pilot_seed)));
  ec.record_timing = r.flag("sweep.record_timing", ec.record_timing);

  try {
    ec.validate();
  } catch (const std::invalid_argument& e) {
    r.fail("sweep", e.what());
  }
  return ec;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path, "", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace dcbf
