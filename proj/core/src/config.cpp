#include "hwsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hwsim/stats.hpp"

namespace hwsim {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void missing(const std::string& section, const std::string& key) {
  throw Error(ErrorCode::ConfigError,
              "missing config key '" + section + "." + key + "'");
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value) {
  throw Error(ErrorCode::ConfigError, "cannot parse config key '" + section +
                                          "." + key + "' = '" + value + "'");
}

}  // namespace

Config Config::parse_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string current;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error(ErrorCode::ConfigError,
                    "line " + std::to_string(lineno) + ": unterminated section");
      current = trim(line.substr(1, line.size() - 2));
      cfg.sections_.emplace_back(current, Section{});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigError,
                  "line " + std::to_string(lineno) + ": expected key = value");
    if (current.empty())
      throw Error(ErrorCode::ConfigError,
                  "line " + std::to_string(lineno) + ": key outside any section");
    cfg.sections_.back().second.emplace_back(trim(line.substr(0, eq)),
                                             trim(line.substr(eq + 1)));
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::ConfigError, "cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw Error(ErrorCode::ConfigError,
                "override '" + assignment + "' is not of the form section.key=value");
  const std::string path = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const auto dot = path.rfind('.');
  if (dot == std::string::npos)
    throw Error(ErrorCode::ConfigError,
                "override path '" + path + "' needs a section.key form");
  const std::string section = trim(path.substr(0, dot));
  const std::string key = trim(path.substr(dot + 1));
  for (auto& [name, entries] : sections_) {
    if (name != section) continue;
    for (auto& [k, v] : entries)
      if (k == key) {
        v = value;
        return;
      }
    entries.emplace_back(key, value);
    return;
  }
  sections_.emplace_back(section, Section{{key, value}});
}

const std::string* Config::find(const std::string& section,
                                const std::string& key) const {
  for (const auto& [name, entries] : sections_) {
    if (name != section) continue;
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
  }
  return nullptr;
}

bool Config::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string Config::get(const std::string& section, const std::string& key) const {
  const std::string* v = find(section, key);
  if (!v) missing(section, key);
  return *v;
}

std::string Config::get_or(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
  const std::string* v = find(section, key);
  return v ? *v : fallback;
}

double Config::get_double(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (trim(v.substr(used)).empty()) return d;
  } catch (const std::exception&) {
  }
  bad_value(section, key, v);
}

double Config::get_double_or(const std::string& section, const std::string& key,
                             double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

int Config::get_int(const std::string& section, const std::string& key) const {
  const double d = get_double(section, key);
  const int i = static_cast<int>(std::llround(d));
  if (std::abs(d - i) > 1e-12) bad_value(section, key, get(section, key));
  return i;
}

int Config::get_int_or(const std::string& section, const std::string& key,
                       int fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

bool Config::get_bool_or(const std::string& section, const std::string& key,
                         bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(section, key, v);
}

std::vector<double> Config::get_doubles(const std::string& section,
                                        const std::string& key) const {
  const std::string v = get(section, key);
  std::istringstream in(v);
  std::vector<double> out;
  double d;
  while (in >> d) out.push_back(d);
  if (!in.eof()) bad_value(section, key, v);
  return out;
}

std::vector<int> Config::get_ints(const std::string& section,
                                  const std::string& key) const {
  std::vector<int> out;
  for (double d : get_doubles(section, key)) {
    const int i = static_cast<int>(std::llround(d));
    if (std::abs(d - i) > 1e-12) bad_value(section, key, get(section, key));
    out.push_back(i);
  }
  return out;
}

std::string Config::canonical() const {
  std::ostringstream out;
  for (const auto& [name, entries] : sections_) {
    out << '[' << name << "]\n";
    for (const auto& [k, v] : entries) out << k << " = " << v << '\n';
  }
  return out.str();
}

std::uint64_t Config::content_hash() const { return fnv1a(canonical()); }

namespace {

Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k];
  return out;
}

}  // namespace

RunConfig RunConfig::load(const std::string& path,
                          const std::vector<std::string>& overrides) {
  RunConfig rc;
  rc.raw = Config::parse_file(path);
  for (const auto& o : overrides) rc.raw.apply_override(o);
  const Config& cfg = rc.raw;

  const int I = cfg.get_int("network", "classes");
  const int J = cfg.get_int("network", "pools");
  if (I < 1 || J < 1)
    throw Error(ErrorCode::ConfigError, "network.classes and network.pools must be >= 1");

  std::vector<std::pair<int, int>> edges;
  LimitParams limit;
  limit.lambda = Vec::Zero(I);
  limit.lambda_hat = Vec::Zero(I);
  limit.gamma = Vec::Zero(I);
  limit.nu = Vec::Zero(J);
  limit.nu_hat = Vec::Zero(J);
  limit.mu = Mat::Zero(I, J);
  limit.mu_hat = Mat::Zero(I, J);
  for (int i = 0; i < I; ++i) {
    const std::string sec = "class " + std::to_string(i + 1);
    limit.lambda[i] = cfg.get_double(sec, "lambda");
    limit.lambda_hat[i] = cfg.get_double_or(sec, "lambda_hat", 0.0);
    limit.gamma[i] = cfg.get_double_or(sec, "gamma", 0.0);
  }
  for (int j = 0; j < J; ++j) {
    const std::string sec = "pool " + std::to_string(j + 1);
    limit.nu[j] = cfg.get_double(sec, "nu");
    limit.nu_hat[j] = cfg.get_double_or(sec, "nu_hat", 0.0);
  }
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j) {
      const std::string sec =
          "edge " + std::to_string(i + 1) + " " + std::to_string(j + 1);
      if (!cfg.has(sec, "mu")) continue;
      edges.emplace_back(i, j);
      limit.mu(i, j) = cfg.get_double(sec, "mu");
      limit.mu_hat(i, j) = cfg.get_double_or(sec, "mu_hat", 0.0);
    }
  limit.allow_zero_abandonment =
      cfg.get_bool_or("network", "allow_zero_abandonment", false);
  rc.topo = NetworkTopology(I, J, edges);
  rc.limit = limit;

  rc.costs.xi = cfg.has("cost", "xi") ? to_vec(cfg.get_doubles("cost", "xi"))
                                      : Vec::Ones(I);
  rc.costs.zeta = cfg.has("cost", "zeta")
                      ? to_vec(cfg.get_doubles("cost", "zeta"))
                      : Vec::Ones(J);
  rc.costs.m = cfg.get_double_or("cost", "m", 1.0);
  rc.costs.m_tilde = cfg.get_double_or("cost", "m_tilde", 1.0);
  if (rc.costs.xi.size() != I)
    throw Error(ErrorCode::ConfigError, "cost.xi needs one weight per class");
  if (rc.costs.zeta.size() != J)
    throw Error(ErrorCode::ConfigError, "cost.zeta needs one weight per pool");
  if (rc.costs.xi.minCoeff() <= 0)
    throw Error(ErrorCode::ConfigError, "cost.xi must be positive");
  if (rc.costs.zeta.minCoeff() < 0)
    throw Error(ErrorCode::ConfigError, "cost.zeta must be nonnegative");
  if (rc.costs.m < 1.0 || rc.costs.m_tilde < 1.0)
    throw Error(ErrorCode::ConfigError, "cost.m and cost.m_tilde must be >= 1");

  if (cfg.has("cost", "theta")) {
    rc.theta = cfg.get_doubles("cost", "theta");
    if (static_cast<int>(rc.theta.size()) != J)
      throw Error(ErrorCode::ConfigError, "cost.theta needs one entry per pool");
    double sum = 0.0;
    for (double t : rc.theta) {
      if (t <= 0)
        throw Error(ErrorCode::ConfigError, "cost.theta must be positive");
      sum += t;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error(ErrorCode::ConfigError, "cost.theta must sum to 1");
  }
  if (cfg.has("cost", "delta")) {
    rc.idle_delta = cfg.get_doubles("cost", "delta");
    if (static_cast<int>(rc.idle_delta.size()) != J)
      throw Error(ErrorCode::ConfigError, "cost.delta needs one entry per pool");
    for (double d : rc.idle_delta)
      if (d <= 0)
        throw Error(ErrorCode::ConfigError, "cost.delta must be positive");
  }

  rc.policy_kind = cfg.get_or("policy", "kind", "bsp");
  if (rc.policy_kind != "bsp" && rc.policy_kind != "canonical" &&
      rc.policy_kind != "concatenated")
    throw Error(ErrorCode::ConfigError,
                "policy.kind must be bsp, canonical, or concatenated");
  rc.C_tilde = cfg.get_double_or("policy", "c_tilde", 0.5);

  rc.n_list = cfg.has("run", "n_list") ? cfg.get_ints("run", "n_list")
                                       : std::vector<int>{100};
  for (int n : rc.n_list)
    if (n < 1) throw Error(ErrorCode::ConfigError, "run.n_list entries must be >= 1");
  if (cfg.has("run", "seeds")) {
    for (int s : cfg.get_ints("run", "seeds"))
      rc.seeds.push_back(static_cast<std::uint64_t>(s));
  } else {
    rc.seeds = {static_cast<std::uint64_t>(cfg.get_int_or("run", "seed", 1))};
  }
  rc.horizon = cfg.get_double_or("run", "horizon", 1000.0);
  rc.diffusion_horizon = cfg.get_double_or("run", "diffusion_horizon", rc.horizon);
  rc.step = cfg.get_double_or("run", "step", 0.005);
  rc.burn_in_frac = cfg.get_double_or("run", "burn_in_frac", 0.1);
  rc.batches = cfg.get_int_or("run", "batches", 32);
  rc.explosion_guard = cfg.get_double_or("run", "explosion_guard", 1e6);
  rc.event_log = cfg.get_bool_or("run", "event_log", false);
  rc.output_dir = cfg.get_or("run", "output", "out");
  if (rc.horizon <= 0 || rc.step <= 0)
    throw Error(ErrorCode::ConfigError, "run.horizon and run.step must be positive");
  if (rc.burn_in_frac < 0 || rc.burn_in_frac >= 1)
    throw Error(ErrorCode::ConfigError, "run.burn_in_frac must be in [0, 1)");
  if (rc.batches < 20)
    throw Error(ErrorCode::ConfigError,
                "run.batches must be >= 20 for batch-means intervals");

  const std::string kind = cfg.get_or("lyapunov", "kind", "exponential");
  rc.lyapunov.kind = kind == "polynomial" ? LyapunovSpec::Kind::Polynomial
                                          : LyapunovSpec::Kind::Exponential;
  rc.lyapunov.epsilon = cfg.get_double_or("lyapunov", "epsilon", 0.01);
  rc.lyapunov.kappa = cfg.get_double_or("lyapunov", "kappa", 2.0);
  rc.lyapunov.delta = cfg.get_double_or("lyapunov", "delta", 0.1);
  rc.lyapunov.beta = cfg.has("lyapunov", "beta")
                         ? to_vec(cfg.get_doubles("lyapunov", "beta"))
                         : Vec::Ones(I);
  if (rc.lyapunov.beta.size() != I || rc.lyapunov.beta.minCoeff() <= 0)
    throw Error(ErrorCode::ConfigError,
                "lyapunov.beta needs one positive weight per class");
  rc.lyapunov_samples.samples = cfg.get_int_or("lyapunov", "samples", 10000);
  rc.lyapunov_samples.radius = cfg.get_double_or("lyapunov", "radius", 20.0);
  rc.lyapunov_samples.seed =
      static_cast<std::uint64_t>(cfg.get_int_or("lyapunov", "seed", 777));

  rc.region_opts.samples = cfg.get_int_or("region", "samples", 10000);
  rc.region_opts.granularity =
      cfg.get_double_or("region", "granularity", 1.0 / 1024.0);
  rc.region_opts.seed =
      static_cast<std::uint64_t>(cfg.get_int_or("region", "seed", 12345));

  rc.grid.half_width = cfg.get_double_or("grid", "half_width", 10.0);
  rc.grid.cell = cfg.get_double_or("grid", "cell", 0.25);
  rc.grid.u_cell = cfg.get_double_or("grid", "u_cell", 0.25);
  rc.grid.include_u = cfg.get_bool_or("grid", "include_u", true);

  const ValidationReport topo_report = validate_topology(rc.topo);
  if (!topo_report.valid())
    throw Error(ErrorCode::ConfigError,
                "invalid topology: " + topo_report.violations.front());
  const ValidationReport param_report = validate_params(rc.topo, rc.limit);
  if (!param_report.valid())
    throw Error(ErrorCode::ConfigError,
                "invalid parameters: " + param_report.violations.front());
  return rc;
}

MarkovControl RunConfig::make_control() const {
  const std::string kind = raw.get_or("control", "kind", "constant");
  if (kind == "table") {
    const std::string file = raw.get("control", "table_file");
    return MarkovControl::load_table(file, topo.num_classes(), topo.num_pools());
  }
  if (kind != "constant")
    throw Error(ErrorCode::ConfigError, "control.kind must be constant or table");
  Control u;
  u.uc = raw.has("control", "uc")
             ? to_vec(raw.get_doubles("control", "uc"))
             : Vec::Unit(topo.num_classes(), topo.num_classes() - 1);
  u.us = raw.has("control", "us")
             ? to_vec(raw.get_doubles("control", "us"))
             : Vec::Unit(topo.num_pools(), topo.num_pools() - 1);
  if (u.uc.size() != topo.num_classes())
    throw Error(ErrorCode::ConfigError, "control.uc needs one entry per class");
  if (u.us.size() != topo.num_pools())
    throw Error(ErrorCode::ConfigError, "control.us needs one entry per pool");
  return MarkovControl::constant(u);
}

std::unique_ptr<SchedulingPolicy> RunConfig::make_policy(
    const ScaledParams& scaled, const FluidSolution& fluid,
    JwcRegion* region_out) const {
  const bool has_anchor = limit.gamma.maxCoeff() > 0;
  CapacityShift shift = has_anchor
                            ? build_capacity_shift(topo, scaled, fluid, C_tilde)
                            : unshifted_capacity_split(topo, scaled, fluid);
  if (policy_kind == "bsp")
    return std::make_unique<BspPolicy>(topo, scaled, std::move(shift));
  MarkovControl control = make_control();
  if (policy_kind == "canonical")
    return std::make_unique<CanonicalJwcPolicy>(topo, scaled, fluid,
                                                std::move(control));
  JwcRegion region = certify_jwc_region(topo, scaled, fluid, region_opts);
  if (region_out) *region_out = region;
  return std::make_unique<ConcatenatedPolicy>(topo, scaled, fluid,
                                              std::move(control),
                                              std::move(shift), std::move(region));
}

}  // namespace hwsim
