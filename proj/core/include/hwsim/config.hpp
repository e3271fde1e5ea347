#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hwsim/ctmc.hpp"
#include "hwsim/diffusion.hpp"
#include "hwsim/policies.hpp"
#include "hwsim/topology.hpp"
#include "hwsim/verify.hpp"

namespace hwsim {

/// Flat key=value sections, kept in file order so the resolved dump (and
/// its content hash) is reproducible.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  /// Overrides of the form "section.key=value"; the key path splits at the
  /// last '.' before '='.
  void apply_override(const std::string& assignment);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;

  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key,
                       double fallback) const;
  int get_int(const std::string& section, const std::string& key) const;
  int get_int_or(const std::string& section, const std::string& key,
                 int fallback) const;
  bool get_bool_or(const std::string& section, const std::string& key,
                   bool fallback) const;
  std::vector<double> get_doubles(const std::string& section,
                                  const std::string& key) const;
  std::vector<int> get_ints(const std::string& section,
                            const std::string& key) const;

  /// Canonical text of the resolved config; identical inputs hash equal.
  std::string canonical() const;
  std::uint64_t content_hash() const;

 private:
  using Section = std::vector<std::pair<std::string, std::string>>;
  std::vector<std::pair<std::string, Section>> sections_;

  const std::string* find(const std::string& section,
                          const std::string& key) const;
};

/// Typed run configuration assembled from the config file.
struct RunConfig {
  Config raw;
  NetworkTopology topo{1, 1, {{0, 0}}};
  LimitParams limit;
  CostParams costs;
  std::vector<double> theta;   // fairness targets, empty when absent
  std::vector<double> idle_delta;  // idleness constraint levels

  std::string policy_kind = "bsp";  // bsp | canonical | concatenated
  double C_tilde = 0.5;

  std::vector<int> n_list;
  std::vector<std::uint64_t> seeds;
  double horizon = 1000.0;
  double diffusion_horizon = 1000.0;
  double step = 0.005;
  double burn_in_frac = 0.1;
  int batches = 32;
  double explosion_guard = 1e6;
  bool event_log = false;
  std::string output_dir = "out";

  LyapunovSpec lyapunov;
  LyapunovSampleOptions lyapunov_samples;
  JwcRegionOptions region_opts;
  GridSpec grid;

  static RunConfig load(const std::string& path,
                        const std::vector<std::string>& overrides);

  MarkovControl make_control() const;
  std::unique_ptr<SchedulingPolicy> make_policy(const ScaledParams& scaled,
                                                const FluidSolution& fluid,
                                                JwcRegion* region_out) const;
};

}  // namespace hwsim
