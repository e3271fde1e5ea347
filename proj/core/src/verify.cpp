#include "hwsim/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hwsim/rng.hpp"

namespace hwsim {

namespace {

// Constrained least squares of D ~ c0 - c1 V with c0, c1 >= 0, then C0
// inflated so the bound holds at every sample. Throws FitFailed when the
// data shows no negative drift trend (slope of D against V nonnegative).
void fit_certificate(LyapunovCertificate& cert) {
  const LinearFit fit = fit_line(cert.V, cert.D);
  double c1 = -fit.slope;
  if (!(c1 > 1e-12))
    throw Error(ErrorCode::FitFailed,
                "no positive C1 fits: generator does not trend negative "
                "against the Lyapunov function (slope " +
                    std::to_string(fit.slope) + ")");
  double c0 = std::max(fit.intercept, 0.0);
  double needed = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cert.V.size(); ++k)
    needed = std::max(needed, cert.D[k] + c1 * cert.V[k]);
  c0 = std::max(c0, needed);
  cert.C0 = c0;
  cert.C1 = c1;
  cert.max_residual = needed - c0;  // <= 0 by construction
  cert.pass = cert.C1 > 0 && cert.max_residual <= 0;
}

IntVec sample_state(Philox& rng, const ScaledParams& scaled,
                    const FluidSolution& fluid, double radius) {
  const auto I = fluid.x_star.size();
  const double rn = std::sqrt(static_cast<double>(scaled.n));
  Vec dir(I);
  for (Eigen::Index i = 0; i < I; ++i) dir[i] = rng.normal();
  const double norm = dir.norm();
  if (norm > 0) dir /= norm;
  const double r = radius * rng.uniform();
  IntVec x(I);
  for (Eigen::Index i = 0; i < I; ++i) {
    const double target = scaled.n * fluid.x_star[i] + rn * r * dir[i];
    x[i] = std::max<std::int64_t>(0, std::llround(target));
  }
  return x;
}

double discrete_generator(const NetworkTopology& topo, const ScaledParams& scaled,
                          const FluidSolution& fluid, const LyapunovSpec& spec,
                          const IntVec& x, const IntMat& z) {
  const double rn = std::sqrt(static_cast<double>(scaled.n));
  const auto I = x.size();
  auto value_at = [&](const IntVec& s) {
    Vec x_hat(I);
    for (Eigen::Index i = 0; i < I; ++i)
      x_hat[i] = (static_cast<double>(s[i]) - scaled.n * fluid.x_star[i]) / rn;
    return spec.value(x_hat);
  };
  const double v0 = value_at(x);
  const IntVec q = queue_of(x, z);
  double acc = 0.0;
  IntVec s = x;
  for (Eigen::Index i = 0; i < I; ++i) {
    s[i] = x[i] + 1;
    const double up = value_at(s) - v0;
    s[i] = x[i] - 1;
    const double down = (x[i] > 0 ? value_at(s) : v0) - v0;
    s[i] = x[i];
    double down_rate = scaled.gamma_n[i] * static_cast<double>(q[i]);
    for (int j : topo.pools_of(i))
      down_rate += scaled.mu_n(i, j) * static_cast<double>(z(i, j));
    acc += scaled.lambda_n[i] * up + down_rate * down;
  }
  return acc;
}

}  // namespace

LyapunovCertificate check_discrete_lyapunov(const NetworkTopology& topo,
                                            const ScaledParams& scaled,
                                            const FluidSolution& fluid,
                                            const SchedulingPolicy& policy,
                                            const LyapunovSpec& spec,
                                            const LyapunovSampleOptions& opts) {
  LyapunovCertificate cert;
  cert.spec = spec;
  cert.n = scaled.n;
  cert.radius = opts.radius;
  cert.policy = policy.name();
  const double rn = std::sqrt(static_cast<double>(scaled.n));
  Philox rng(opts.seed, 0);
  cert.states.reserve(opts.samples);
  for (int k = 0; k < opts.samples; ++k) {
    const IntVec x = sample_state(rng, scaled, fluid, opts.radius);
    const IntMat z = policy.decide(x);
    Vec x_hat(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x_hat[i] = (static_cast<double>(x[i]) - scaled.n * fluid.x_star[i]) / rn;
    cert.states.push_back(x);
    cert.V.push_back(spec.value(x_hat));
    cert.D.push_back(discrete_generator(topo, scaled, fluid, spec, x, z));
  }
  fit_certificate(cert);
  return cert;
}

LyapunovCertificate check_jwc_stability_preservation(
    const NetworkTopology& topo, const ScaledParams& scaled,
    const FluidSolution& fluid, const MarkovControl& control,
    const JwcRegion& region, const LyapunovSpec& spec,
    const LyapunovSampleOptions& opts) {
  LyapunovCertificate cert;
  cert.spec = spec;
  cert.n = scaled.n;
  cert.radius = opts.radius;
  cert.policy = "canonical";
  const double rn = std::sqrt(static_cast<double>(scaled.n));
  Philox rng(opts.seed, 1);
  int attempts = 0;
  const int max_attempts = 100 * opts.samples;
  while (static_cast<int>(cert.states.size()) < opts.samples &&
         attempts++ < max_attempts) {
    const IntVec x = sample_state(rng, scaled, fluid, opts.radius);
    if (!region.contains(x)) continue;  // out-of-region states never evaluated
    const IntMat z = canonical_jwc_decide(topo, scaled, fluid, control, x);
    Vec x_hat(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x_hat[i] = (static_cast<double>(x[i]) - scaled.n * fluid.x_star[i]) / rn;
    cert.states.push_back(x);
    cert.V.push_back(spec.value(x_hat));
    cert.D.push_back(discrete_generator(topo, scaled, fluid, spec, x, z));
  }
  if (cert.states.empty())
    throw Error(ErrorCode::FitFailed, "no in-region samples found");
  fit_certificate(cert);
  return cert;
}

LyapunovCertificate check_diffusion_lyapunov(const DiffusionModel& model,
                                             const MarkovControl& control,
                                             const LyapunovSpec& spec,
                                             const LyapunovSampleOptions& opts) {
  LyapunovCertificate cert;
  cert.spec = spec;
  cert.radius = opts.radius;
  cert.policy = "diffusion:" + control.kind();
  Philox rng(opts.seed, 2);
  auto grad = [&spec](const Vec& x) { return spec.gradient(x); };
  auto hess = [&spec](const Vec& x) { return spec.hessian_diag(x); };
  for (int k = 0; k < opts.samples; ++k) {
    Vec x(model.dim());
    for (int i = 0; i < model.dim(); ++i) x[i] = rng.normal();
    const double norm = x.norm();
    if (norm > 0) x *= opts.radius * rng.uniform() / norm;
    const Control u = control(x);
    cert.V.push_back(spec.value(x));
    cert.D.push_back(generator_apply(model, grad, hess, x, u));
  }
  fit_certificate(cert);
  return cert;
}

StructuralFit fit_structural_drift(const DiffusionModel& model,
                                   const LyapunovSpec& spec, double delta,
                                   bool plus_cone, double radius, int samples,
                                   std::uint64_t seed) {
  StructuralFit out;
  out.delta = delta;
  out.plus_cone = plus_cone;
  out.samples = samples;
  const int I = model.dim();
  const int J = model.topology().num_pools();
  Philox rng(seed, 3);

  std::vector<double> v_off, g_off, v_on, g_on;
  for (int k = 0; k < samples; ++k) {
    Vec x(I);
    for (int i = 0; i < I; ++i) x[i] = rng.normal();
    const double norm = x.norm();
    if (norm > 0) x *= radius * rng.uniform() / norm;
    const Vec grad = spec.gradient(x);
    // b is affine in (u^c, u^s), so the sup over the action set is attained
    // at corner pairs.
    double sup = -std::numeric_limits<double>::infinity();
    for (int i0 = 0; i0 < I; ++i0)
      for (int j0 = 0; j0 < J; ++j0) {
        Control u{Vec::Unit(I, i0), Vec::Unit(J, j0)};
        sup = std::max(sup, model.drift(x, u).dot(grad));
      }
    const double v = spec.value(x);
    if (in_cone(x, delta, plus_cone)) {
      v_on.push_back(v);
      g_on.push_back(sup);
    } else {
      v_off.push_back(v);
      g_off.push_back(sup);
    }
  }
  if (v_off.size() < 10)
    throw Error(ErrorCode::FitFailed, "too few samples off the cone");
  const LinearFit fit = fit_line(v_off, g_off);
  out.c1 = -fit.slope;
  if (!(out.c1 > 1e-12)) {
    out.pass = false;
    return out;
  }
  double c0 = std::max(fit.intercept, 0.0);
  for (std::size_t k = 0; k < v_off.size(); ++k)
    c0 = std::max(c0, g_off[k] + out.c1 * v_off[k]);
  out.c0 = c0;
  out.c2 = 0.0;
  for (std::size_t k = 0; k < v_on.size(); ++k)
    out.c2 = std::max(out.c2, (g_on[k] - out.c0) / std::max(v_on[k], 1e-12));
  out.c2 = std::max(out.c2, 0.0);
  out.pass = true;
  return out;
}

TraceMoments trace_moments(const std::string& label, const CtmcResult& result,
                           bool stable) {
  TraceMoments tm;
  tm.label = label;
  tm.n = result.n;
  tm.stable = stable;
  tm.x_hat0_norm = result.x_hat0.norm();
  tm.kappas = result.kappas;
  tm.moment_x = result.moment_xhat;
  tm.moment_queue_idle = result.moment_queue_idle;
  tm.moment_queue = result.moment_queue;
  return tm;
}

MomentAudit check_moment_bounds(const std::vector<TraceMoments>& traces,
                                const std::vector<double>& kappas,
                                bool queue_only) {
  MomentAudit audit;
  audit.queue_only = queue_only;
  std::vector<const TraceMoments*> used;
  for (const auto& t : traces) {
    if (t.stable)
      used.push_back(&t);
    else
      ++audit.excluded_unstable;
  }

  for (double kappa : kappas) {
    MomentAuditFit fit;
    fit.kappa = kappa;
    std::vector<double> a, b, m;  // bound: a*C0 + b*C1 >= m
    for (const auto* t : used) {
      auto it = std::find(t->kappas.begin(), t->kappas.end(), kappa);
      if (it == t->kappas.end()) continue;
      const auto k = static_cast<std::size_t>(it - t->kappas.begin());
      a.push_back(1.0 + std::pow(t->x_hat0_norm, kappa));
      b.push_back(queue_only ? t->moment_queue[k] : t->moment_queue_idle[k]);
      m.push_back(t->moment_x[k]);
    }
    if (a.empty()) {
      audit.fits.push_back(fit);
      continue;
    }
    // Two nonnegative unknowns and T half-plane constraints: the minimal
    // C0 + C1 sits on a vertex (a pairwise intersection or an axis point).
    double best = std::numeric_limits<double>::infinity();
    double best0 = 0.0, best1 = 0.0;
    auto consider = [&](double c0, double c1) {
      if (c0 < 0 || c1 < 0 || !std::isfinite(c0) || !std::isfinite(c1)) return;
      for (std::size_t t = 0; t < a.size(); ++t)
        if (a[t] * c0 + b[t] * c1 < m[t] - 1e-9) return;
      if (c0 + c1 < best) {
        best = c0 + c1;
        best0 = c0;
        best1 = c1;
      }
    };
    for (std::size_t s = 0; s < a.size(); ++s) {
      consider(m[s] / a[s], 0.0);
      if (b[s] > 0) consider(0.0, m[s] / b[s]);
      for (std::size_t t = s + 1; t < a.size(); ++t) {
        const double det = a[s] * b[t] - a[t] * b[s];
        if (std::abs(det) < 1e-12) continue;
        consider((m[s] * b[t] - m[t] * b[s]) / det,
                 (a[s] * m[t] - a[t] * m[s]) / det);
      }
    }
    consider(0.0, 0.0);
    fit.feasible = std::isfinite(best);
    if (fit.feasible) {
      fit.C0 = best0;
      fit.C1 = best1;
      std::size_t idx = 0;
      for (const auto* t : used) {
        auto it = std::find(t->kappas.begin(), t->kappas.end(), kappa);
        if (it == t->kappas.end()) continue;
        MomentAuditEntry entry;
        entry.label = t->label;
        entry.n = t->n;
        const double bound = fit.C0 * a[idx] + fit.C1 * b[idx];
        entry.bound_ratio = bound > 0 ? m[idx] / bound : 0.0;
        fit.entries.push_back(entry);
        fit.worst_ratio = std::max(fit.worst_ratio, entry.bound_ratio);
        ++idx;
      }
    }
    audit.fits.push_back(fit);
  }
  return audit;
}

namespace {

ErgodicEstimate pool_batches(const std::vector<std::vector<double>>& groups,
                             double horizon, std::uint64_t seed) {
  std::vector<double> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  return pooled_estimate(all, horizon, seed);
}

}  // namespace

ConvergenceReport convergence_experiment(const NetworkTopology& topo,
                                         const LimitParams& limit,
                                         const MarkovControl& control,
                                         const CostParams& costs,
                                         const ConvergenceOptions& opts) {
  if (opts.n_list.empty())
    throw Error(ErrorCode::ConfigError, "convergence needs a nonempty n list");
  const FluidSolution fluid = solve_fluid(topo, limit);
  const int J = topo.num_pools();

  ConvergenceReport report;
  report.theta = opts.theta;

  // diffusion side, one replication per seed
  DiffusionModel model(topo, limit, fluid);
  EmpiricalMeasure diff_hist(opts.grid, topo.num_classes(), J);
  std::vector<std::vector<double>> d_cost, d_queue;
  std::vector<std::vector<std::vector<double>>> d_pools(J);
  for (std::size_t k = 0; k < opts.seeds.size(); ++k) {
    SdeOptions sde;
    sde.horizon = opts.diffusion_horizon;
    sde.step = opts.step;
    sde.burn_in_frac = opts.burn_in_frac;
    sde.batches = opts.batches;
    sde.seed = opts.seeds[k];
    sde.stream = 1000 + k;
    EmpiricalMeasure h(opts.grid, topo.num_classes(), J);
    const SdePathSummary path = simulate_sde(
        model, control, Vec::Zero(topo.num_classes()), costs, sde, &h);
    diff_hist.merge(h);
    d_cost.push_back(path.cost_batches);
    d_queue.push_back(path.cost_queue_batches);
    for (int j = 0; j < J; ++j) d_pools[j].push_back(path.cost_pool_batches[j]);
  }
  report.diffusion_cost =
      pool_batches(d_cost, opts.diffusion_horizon, opts.seeds[0]);
  report.diffusion_cost_queue =
      pool_batches(d_queue, opts.diffusion_horizon, opts.seeds[0]);
  double diff_pool_sum = 0.0;
  for (int j = 0; j < J; ++j) {
    report.diffusion_cost_pools.push_back(
        pool_batches(d_pools[j], opts.diffusion_horizon, opts.seeds[0]));
    diff_pool_sum += report.diffusion_cost_pools.back().estimate;
  }
  for (int j = 0; j < J; ++j)
    report.diffusion_idleness_ratios.push_back(
        diff_pool_sum > 0
            ? report.diffusion_cost_pools[j].estimate / diff_pool_sum
            : 0.0);

  for (int n : opts.n_list) {
    const ScaledParams scaled = scale_params(topo, limit, n);
    const CapacityShift shift =
        build_capacity_shift(topo, scaled, fluid, opts.C_tilde);
    const JwcRegion region =
        certify_jwc_region(topo, scaled, fluid, opts.region_opts);
    ConcatenatedPolicy policy(topo, scaled, fluid, control, shift, region);

    CtmcOptions base;
    base.horizon = opts.ctmc_horizon;
    base.burn_in_frac = opts.burn_in_frac;
    base.batches = opts.batches;
    std::vector<EmpiricalMeasure> hists(
        opts.seeds.size(),
        EmpiricalMeasure(opts.grid, topo.num_classes(), J));
    const auto results = simulate_replications(
        topo, scaled, fluid, policy, costs, base, opts.seeds, &region, &hists);

    ConvergenceEntry entry;
    entry.n = n;
    entry.seeds = opts.seeds;
    entry.M0 = region.M0;
    entry.jwc_fallbacks = policy.fallback_count();
    EmpiricalMeasure merged(opts.grid, topo.num_classes(), J);
    std::vector<std::vector<double>> c_cost, c_queue;
    std::vector<std::vector<std::vector<double>>> c_pools(J);
    double frac_in = 0.0;
    for (std::size_t k = 0; k < results.size(); ++k) {
      merged.merge(hists[k]);
      c_cost.push_back(results[k].cost_batches);
      c_queue.push_back(results[k].cost_queue_batches);
      for (int j = 0; j < J; ++j)
        c_pools[j].push_back(results[k].cost_pool_batches[j]);
      frac_in += results[k].frac_time_in_region;
      entry.invariant_violations += results[k].invariant_violations;
    }
    entry.cost = pool_batches(c_cost, opts.ctmc_horizon, opts.seeds[0]);
    entry.cost_queue = pool_batches(c_queue, opts.ctmc_horizon, opts.seeds[0]);
    double pool_sum = 0.0;
    for (int j = 0; j < J; ++j) {
      entry.cost_pools.push_back(
          pool_batches(c_pools[j], opts.ctmc_horizon, opts.seeds[0]));
      pool_sum += entry.cost_pools.back().estimate;
    }
    for (int j = 0; j < J; ++j)
      entry.idleness_ratios.push_back(
          pool_sum > 0 ? entry.cost_pools[j].estimate / pool_sum : 0.0);
    entry.frac_outside_region =
        1.0 - frac_in / static_cast<double>(results.size());
    entry.gap = std::abs(entry.cost.estimate - report.diffusion_cost.estimate);
    entry.tv_distance = merged.tv_distance(diff_hist);
    report.entries.push_back(std::move(entry));
  }

  std::vector<double> ns, gaps, exits;
  for (const auto& e : report.entries) {
    ns.push_back(static_cast<double>(e.n));
    gaps.push_back(e.gap);
    exits.push_back(e.frac_outside_region);
  }
  report.gap_spearman = spearman(ns, gaps);
  report.region_exit_spearman = spearman(ns, exits);

  if (!opts.theta.empty()) {
    if (static_cast<int>(opts.theta.size()) != J)
      throw Error(ErrorCode::ConfigError, "theta size differs from pool count");
    const auto& last = report.entries.back();
    for (int j = 0; j < J; ++j)
      report.fairness_epsilon =
          std::max(report.fairness_epsilon,
                   std::abs(last.idleness_ratios[j] - opts.theta[j]));
  }
  return report;
}

}  // namespace hwsim
