#include "hwsim/cli.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "hwsim/config.hpp"

namespace hwsim::cli {

using ordered_json = nlohmann::ordered_json;

const char* const kSubcommands[7] = {
    "fluid",          "psi",
    "simulate-ctmc",  "simulate-diffusion",
    "verify-lyapunov", "verify-moments",
    "convergence"};

namespace {

ordered_json to_json(const Vec& v) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

ordered_json to_json(const IntVec& v) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

ordered_json to_json(const Mat& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json to_json(const IntMat& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json to_json(const ErgodicEstimate& e) {
  return ordered_json{{"estimate", e.estimate},
                      {"ci_half_width", e.half_width},
                      {"batches", e.num_batches},
                      {"horizon", e.horizon},
                      {"seed", e.seed}};
}

ordered_json config_block(const RunConfig& rc) {
  return ordered_json{{"config_hash", rc.raw.content_hash()},
                      {"config", rc.raw.canonical()}};
}

void write_artifact(const RunConfig& rc, const std::string& name,
                    ordered_json body, std::ostream& out) {
  std::filesystem::create_directories(rc.output_dir);
  const std::string path = rc.output_dir + "/" + name;
  ordered_json doc = config_block(rc);
  for (auto& [k, v] : body.items()) doc[k] = std::move(v);
  std::ofstream file(path, std::ios::binary);
  file << doc.dump(2) << '\n';
  out << "wrote " << path << '\n';
}

ordered_json ctmc_record(const CtmcResult& r) {
  ordered_json rec{{"kind", "ctmc"},
                   {"n", r.n},
                   {"horizon", r.horizon},
                   {"seed", r.seed},
                   {"events", r.num_events},
                   {"cost", to_json(r.cost)},
                   {"cost_queue", to_json(r.cost_queue)}};
  ordered_json pools = ordered_json::array();
  for (const auto& p : r.cost_pools) pools.push_back(to_json(p));
  rec["cost_pools"] = std::move(pools);
  rec["x_hat0"] = to_json(r.x_hat0);
  rec["max_norm_xhat"] = r.max_norm_xhat;
  rec["lemma22_ratio"] = r.lemma22_ratio;
  rec["frac_time_in_region"] = r.frac_time_in_region;
  rec["invariant_violations"] = r.invariant_violations;
  rec["kappas"] = r.kappas;
  rec["moment_xhat"] = r.moment_xhat;
  rec["moment_queue_idle"] = r.moment_queue_idle;
  rec["moment_queue"] = r.moment_queue;
  return rec;
}

ordered_json sde_record(const SdePathSummary& r, int dim) {
  ordered_json rec{{"kind", "diffusion"},
                   {"n", 0},
                   {"horizon", r.horizon},
                   {"seed", r.seed},
                   {"step", r.step},
                   {"cost", to_json(r.cost)},
                   {"cost_queue", to_json(r.cost_queue)}};
  ordered_json pools = ordered_json::array();
  for (const auto& p : r.cost_pools) pools.push_back(to_json(p));
  rec["cost_pools"] = std::move(pools);
  rec["max_norm"] = r.max_norm;
  rec["kappas"] = r.kappas;
  rec["moment_averages"] = r.moment_averages;
  (void)dim;
  return rec;
}

void write_event_log(const RunConfig& rc, const CtmcResult& result,
                     const std::string& name) {
  if (!result.trace) return;
  std::filesystem::create_directories(rc.output_dir);
  std::ofstream csv(rc.output_dir + "/" + name, std::ios::binary);
  csv << "time,event,class,pool";
  for (int i = 0; i < rc.topo.num_classes(); ++i) csv << ",x" << (i + 1);
  csv << '\n';
  csv << std::setprecision(17);
  IntVec x = result.trace->x0;
  double t = 0.0;
  static const char* kNames[] = {"arrival", "service", "abandon"};
  for (const auto& step : result.trace->steps) {
    t += step.dt;
    x[step.cls] += EventTrace::delta(step.kind);
    csv << t << ',' << kNames[static_cast<int>(step.kind)] << ','
        << (step.cls + 1) << ',' << (step.pool >= 0 ? step.pool + 1 : 0);
    for (Eigen::Index i = 0; i < x.size(); ++i) csv << ',' << x[i];
    csv << '\n';
  }
}

int run_fluid(const RunConfig& rc, std::ostream& out) {
  const FluidSolution fluid = solve_fluid(rc.topo, rc.limit);
  const DriftMatrices dm = extract_drift_matrices(rc.topo, rc.limit, fluid);
  ordered_json body{{"xi_star", to_json(fluid.xi_star)},
                    {"x_star", to_json(fluid.x_star)},
                    {"z_star", to_json(fluid.z_star)},
                    {"ell", to_json(dm.ell)},
                    {"B1", to_json(dm.B1)},
                    {"B2", to_json(dm.B2)}};
  ordered_json order = ordered_json::array();
  for (int i : dm.elimination_order) order.push_back(i + 1);
  body["elimination_order"] = std::move(order);
  write_artifact(rc, "fluid.json", std::move(body), out);
  return 0;
}

int run_psi(const RunConfig& rc, std::ostream& out) {
  Vec alpha(rc.topo.num_classes());
  Vec beta(rc.topo.num_pools());
  {
    const auto a = rc.raw.get_doubles("psi", "alpha");
    const auto b = rc.raw.get_doubles("psi", "beta");
    if (static_cast<int>(a.size()) != rc.topo.num_classes())
      throw Error(ErrorCode::ConfigError, "psi.alpha needs one entry per class");
    if (static_cast<int>(b.size()) != rc.topo.num_pools())
      throw Error(ErrorCode::ConfigError, "psi.beta needs one entry per pool");
    for (std::size_t k = 0; k < a.size(); ++k) alpha[k] = a[k];
    for (std::size_t k = 0; k < b.size(); ++k) beta[k] = b[k];
  }
  const Mat psi = psi_map(rc.topo, alpha, beta);
  write_artifact(rc, "psi.json",
                 ordered_json{{"alpha", to_json(alpha)},
                              {"beta", to_json(beta)},
                              {"psi", to_json(psi)}},
                 out);
  return 0;
}

int run_simulate_ctmc(const RunConfig& rc, std::ostream& out) {
  const FluidSolution fluid = solve_fluid(rc.topo, rc.limit);
  ordered_json runs = ordered_json::array();
  for (int n : rc.n_list) {
    const ScaledParams scaled = scale_params(rc.topo, rc.limit, n);
    JwcRegion region;
    auto policy = rc.make_policy(scaled, fluid, &region);
    const JwcRegion* region_ptr =
        rc.policy_kind == "concatenated" ? &region : nullptr;
    for (std::size_t k = 0; k < rc.seeds.size(); ++k) {
      CtmcOptions opts;
      opts.horizon = rc.horizon;
      opts.burn_in_frac = rc.burn_in_frac;
      opts.batches = rc.batches;
      opts.seed = rc.seeds[k];
      opts.stream = k;
      opts.explosion_guard = rc.explosion_guard;
      opts.record_trace = rc.event_log;
      const CtmcResult result = simulate_ctmc(rc.topo, scaled, fluid, *policy,
                                              rc.costs, opts, region_ptr);
      runs.push_back(ctmc_record(result));
      if (rc.event_log)
        write_event_log(rc, result,
                        "events_n" + std::to_string(n) + "_seed" +
                            std::to_string(rc.seeds[k]) + ".csv");
    }
  }
  write_artifact(rc, "ctmc.json", ordered_json{{"runs", std::move(runs)}}, out);
  return 0;
}

int run_simulate_diffusion(const RunConfig& rc, std::ostream& out) {
  const FluidSolution fluid = solve_fluid(rc.topo, rc.limit);
  const DiffusionModel model(rc.topo, rc.limit, fluid);
  const MarkovControl control = rc.make_control();
  ordered_json runs = ordered_json::array();
  for (std::size_t k = 0; k < rc.seeds.size(); ++k) {
    SdeOptions opts;
    opts.horizon = rc.diffusion_horizon;
    opts.step = rc.step;
    opts.burn_in_frac = rc.burn_in_frac;
    opts.batches = rc.batches;
    opts.seed = rc.seeds[k];
    opts.stream = k;
    const SdePathSummary path = simulate_sde(
        model, control, Vec::Zero(rc.topo.num_classes()), rc.costs, opts);
    runs.push_back(sde_record(path, rc.topo.num_classes()));
  }
  write_artifact(rc, "diffusion.json", ordered_json{{"runs", std::move(runs)}},
                 out);
  return 0;
}

ordered_json certificate_record(const LyapunovCertificate& cert) {
  ordered_json rec{{"n", cert.n},
                   {"policy", cert.policy},
                   {"epsilon", cert.spec.epsilon},
                   {"kappa", cert.spec.kappa},
                   {"kind", cert.spec.kind == LyapunovSpec::Kind::Exponential
                                ? "exponential"
                                : "polynomial"},
                   {"beta", to_json(cert.spec.beta)},
                   {"C0", cert.C0},
                   {"C1", cert.C1},
                   {"max_residual", cert.max_residual},
                   {"pass", cert.pass},
                   {"samples", static_cast<int>(cert.V.size())},
                   {"radius", cert.radius}};
  ordered_json states = ordered_json::array();
  for (const auto& s : cert.states) states.push_back(to_json(s));
  rec["states"] = std::move(states);
  rec["V"] = cert.V;
  rec["D"] = cert.D;
  return rec;
}

int run_verify_lyapunov(const RunConfig& rc, std::ostream& out) {
  const FluidSolution fluid = solve_fluid(rc.topo, rc.limit);
  ordered_json certs = ordered_json::array();
  for (int n : rc.n_list) {
    const ScaledParams scaled = scale_params(rc.topo, rc.limit, n);
    LyapunovCertificate cert;
    if (rc.policy_kind == "canonical" || rc.policy_kind == "concatenated") {
      const JwcRegion region =
          certify_jwc_region(rc.topo, scaled, fluid, rc.region_opts);
      cert = check_jwc_stability_preservation(rc.topo, scaled, fluid,
                                              rc.make_control(), region,
                                              rc.lyapunov, rc.lyapunov_samples);
    } else {
      JwcRegion region;
      auto policy = rc.make_policy(scaled, fluid, &region);
      cert = check_discrete_lyapunov(rc.topo, scaled, fluid, *policy,
                                     rc.lyapunov, rc.lyapunov_samples);
    }
    certs.push_back(certificate_record(cert));
  }
  write_artifact(rc, "lyapunov.json",
                 ordered_json{{"certificates", std::move(certs)}}, out);
  return 0;
}

int run_verify_moments(const RunConfig& rc, std::ostream& out) {
  const FluidSolution fluid = solve_fluid(rc.topo, rc.limit);
  std::vector<TraceMoments> traces;
  ordered_json runs = ordered_json::array();
  for (int n : rc.n_list) {
    const ScaledParams scaled = scale_params(rc.topo, rc.limit, n);
    JwcRegion region;
    auto policy = rc.make_policy(scaled, fluid, &region);
    CtmcOptions base;
    base.horizon = rc.horizon;
    base.burn_in_frac = rc.burn_in_frac;
    base.batches = rc.batches;
    base.explosion_guard = rc.explosion_guard;
    const auto results = simulate_replications(rc.topo, scaled, fluid, *policy,
                                               rc.costs, base, rc.seeds);
    for (const auto& r : results) {
      bool stable = true;
      try {
        stable = tail_decay_fit(r.tail).slope < 0;
      } catch (const Error&) {
        stable = false;
      }
      const std::string label =
          "n" + std::to_string(n) + "/seed" + std::to_string(r.seed);
      traces.push_back(trace_moments(label, r, stable));
      runs.push_back(ctmc_record(r));
    }
  }
  const std::vector<double> kappas = {1.0, 2.0, 4.0};
  const MomentAudit general = check_moment_bounds(traces, kappas, false);
  const MomentAudit queue_only = check_moment_bounds(traces, kappas, true);
  auto audit_json = [](const MomentAudit& a) {
    ordered_json fits = ordered_json::array();
    for (const auto& f : a.fits) {
      ordered_json entries = ordered_json::array();
      for (const auto& e : f.entries)
        entries.push_back(ordered_json{
            {"label", e.label}, {"n", e.n}, {"bound_ratio", e.bound_ratio}});
      fits.push_back(ordered_json{{"kappa", f.kappa},
                                  {"C0", f.C0},
                                  {"C1", f.C1},
                                  {"worst_ratio", f.worst_ratio},
                                  {"feasible", f.feasible},
                                  {"entries", std::move(entries)}});
    }
    return ordered_json{{"queue_only", a.queue_only},
                        {"excluded_unstable", a.excluded_unstable},
                        {"fits", std::move(fits)}};
  };
  write_artifact(rc, "moments.json",
                 ordered_json{{"runs", std::move(runs)},
                              {"audit", audit_json(general)},
                              {"audit_queue_only", audit_json(queue_only)}},
                 out);
  return 0;
}

int run_convergence(const RunConfig& rc, std::ostream& out) {
  ConvergenceOptions opts;
  opts.n_list = rc.n_list;
  opts.seeds = rc.seeds;
  opts.ctmc_horizon = rc.horizon;
  opts.diffusion_horizon = rc.diffusion_horizon;
  opts.step = rc.step;
  opts.burn_in_frac = rc.burn_in_frac;
  opts.batches = rc.batches;
  opts.C_tilde = rc.C_tilde;
  opts.grid = rc.grid;
  opts.theta = rc.theta;
  opts.region_opts = rc.region_opts;
  ConvergenceReport report =
      convergence_experiment(rc.topo, rc.limit, rc.make_control(), rc.costs, opts);
  report.config_hash = rc.raw.content_hash();

  ordered_json entries = ordered_json::array();
  for (const auto& e : report.entries) {
    ordered_json pools = ordered_json::array();
    for (const auto& p : e.cost_pools) pools.push_back(to_json(p));
    entries.push_back(ordered_json{{"n", e.n},
                                   {"cost", to_json(e.cost)},
                                   {"cost_queue", to_json(e.cost_queue)},
                                   {"cost_pools", std::move(pools)},
                                   {"idleness_ratios", e.idleness_ratios},
                                   {"gap", e.gap},
                                   {"tv_distance", e.tv_distance},
                                   {"frac_outside_region", e.frac_outside_region},
                                   {"M0", e.M0},
                                   {"jwc_fallbacks", e.jwc_fallbacks},
                                   {"invariant_violations", e.invariant_violations},
                                   {"seeds", e.seeds}});
  }
  ordered_json diff_pools = ordered_json::array();
  for (const auto& p : report.diffusion_cost_pools) diff_pools.push_back(to_json(p));
  ordered_json body{{"entries", std::move(entries)},
                    {"diffusion_cost", to_json(report.diffusion_cost)},
                    {"diffusion_cost_queue", to_json(report.diffusion_cost_queue)},
                    {"diffusion_cost_pools", std::move(diff_pools)},
                    {"diffusion_idleness_ratios", report.diffusion_idleness_ratios},
                    {"gap_spearman", report.gap_spearman},
                    {"region_exit_spearman", report.region_exit_spearman}};
  if (!report.theta.empty()) {
    body["theta"] = report.theta;
    body["fairness_epsilon"] = report.fairness_epsilon;
  }
  write_artifact(rc, "convergence.json", std::move(body), out);

  std::filesystem::create_directories(rc.output_dir);
  std::ofstream csv(rc.output_dir + "/plot_data.csv", std::ios::binary);
  csv << "n,estimate,ci_lo,ci_hi,metric\n";
  csv << std::setprecision(17);
  auto row = [&csv](int n, double est, double lo, double hi,
                    const std::string& metric) {
    csv << n << ',' << est << ',' << lo << ',' << hi << ',' << metric << '\n';
  };
  for (const auto& e : report.entries) {
    row(e.n, e.cost.estimate, e.cost.estimate - e.cost.half_width,
        e.cost.estimate + e.cost.half_width, "cost");
    row(e.n, e.cost_queue.estimate, e.cost_queue.estimate - e.cost_queue.half_width,
        e.cost_queue.estimate + e.cost_queue.half_width, "cost_queue");
    for (std::size_t j = 0; j < e.cost_pools.size(); ++j)
      row(e.n, e.cost_pools[j].estimate,
          e.cost_pools[j].estimate - e.cost_pools[j].half_width,
          e.cost_pools[j].estimate + e.cost_pools[j].half_width,
          "cost_pool_" + std::to_string(j + 1));
    row(e.n, e.gap, e.gap, e.gap, "gap");
    row(e.n, e.tv_distance, e.tv_distance, e.tv_distance, "tv_distance");
    row(e.n, e.frac_outside_region, e.frac_outside_region, e.frac_outside_region,
        "frac_outside_region");
  }
  row(0, report.diffusion_cost.estimate,
      report.diffusion_cost.estimate - report.diffusion_cost.half_width,
      report.diffusion_cost.estimate + report.diffusion_cost.half_width,
      "diffusion_cost");
  out << "wrote " << rc.output_dir << "/plot_data.csv" << '\n';
  return 0;
}

}  // namespace

int run(const std::string& subcommand, const std::string& config_path,
        const std::vector<std::string>& overrides, std::ostream& out,
        std::ostream& err) {
  try {
    const RunConfig rc = RunConfig::load(config_path, overrides);
    if (subcommand == "fluid") return run_fluid(rc, out);
    if (subcommand == "psi") return run_psi(rc, out);
    if (subcommand == "simulate-ctmc") return run_simulate_ctmc(rc, out);
    if (subcommand == "simulate-diffusion") return run_simulate_diffusion(rc, out);
    if (subcommand == "verify-lyapunov") return run_verify_lyapunov(rc, out);
    if (subcommand == "verify-moments") return run_verify_moments(rc, out);
    if (subcommand == "convergence") return run_convergence(rc, out);
    err << "unknown subcommand '" << subcommand << "'\n";
    return 2;
  } catch (const Error& e) {
    err << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::ConfigError:
      case ErrorCode::DomainViolation:
      case ErrorCode::NegativeRate:
      case ErrorCode::NotCriticallyLoaded:
      case ErrorCode::ResourcePoolingViolated:
        return 2;
      default:
        return 3;
    }
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    return 3;
  }
}

}  // namespace hwsim::cli
