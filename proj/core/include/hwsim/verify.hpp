#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hwsim/ctmc.hpp"
#include "hwsim/diffusion.hpp"
#include "hwsim/policies.hpp"
#include "hwsim/types.hpp"

namespace hwsim {

/// Sampled Foster-Lyapunov certificate: constants (C0, C1) with
/// generator(V)(x) <= C0 - C1 V(x) at every sampled state. Fitting is
/// constrained least squares; a failed fit flags missing negative drift,
/// it does not prove instability.
struct LyapunovCertificate {
  LyapunovSpec spec;
  double C0 = 0.0;
  double C1 = 0.0;
  double max_residual = 0.0;  // max over samples of D + C1 V - C0
  bool pass = false;
  int n = 0;
  double radius = 0.0;  // sampled ball radius in diffusion scale
  std::string policy;
  std::vector<IntVec> states;
  std::vector<double> V;  // Lyapunov values at the samples
  std::vector<double> D;  // exact discrete generator values
};

struct LyapunovSampleOptions {
  int samples = 10000;
  double radius = 20.0;
  std::uint64_t seed = 777;
};

/// Exact discrete generator of the diffusion-scaled chain under `policy`,
/// evaluated on sampled states, then fitted. Throws FitFailed when no
/// strictly positive C1 fits the trend.
LyapunovCertificate check_discrete_lyapunov(
    const NetworkTopology& topo, const ScaledParams& scaled,
    const FluidSolution& fluid, const SchedulingPolicy& policy,
    const LyapunovSpec& spec, const LyapunovSampleOptions& opts = {});

/// Same check under the canonical policy of a stabilizing control, with
/// samples restricted to the certified JWC region.
LyapunovCertificate check_jwc_stability_preservation(
    const NetworkTopology& topo, const ScaledParams& scaled,
    const FluidSolution& fluid, const MarkovControl& control,
    const JwcRegion& region, const LyapunovSpec& spec,
    const LyapunovSampleOptions& opts = {});

/// Diffusion-side certificate L^v V <= c0 - c1 V over sampled states.
LyapunovCertificate check_diffusion_lyapunov(
    const DiffusionModel& model, const MarkovControl& control,
    const LyapunovSpec& spec, const LyapunovSampleOptions& opts = {});

/// Fit of the structural drift inequality: over sampled x and the exact
/// sup over controls, b.grad(V) <= c0 - c1 V off the cone K_delta plus
/// c2 V on it. The plus variant uses K_{delta,+} (BQBS form).
struct StructuralFit {
  double delta = 0.1;
  bool plus_cone = false;
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  bool pass = false;
  int samples = 0;
};

StructuralFit fit_structural_drift(const DiffusionModel& model,
                                   const LyapunovSpec& spec, double delta,
                                   bool plus_cone, double radius, int samples,
                                   std::uint64_t seed);

/// Per-trace inputs of the moment-bound audit.
struct TraceMoments {
  std::string label;
  int n = 0;
  bool stable = true;
  double x_hat0_norm = 0.0;
  std::vector<double> kappas;
  std::vector<double> moment_x;
  std::vector<double> moment_queue_idle;
  std::vector<double> moment_queue;
};

TraceMoments trace_moments(const std::string& label, const CtmcResult& result,
                           bool stable = true);

struct MomentAuditEntry {
  std::string label;
  int n = 0;
  double bound_ratio = 0.0;  // state moment over fitted bound, <= 1 when held
};

struct MomentAuditFit {
  double kappa = 0.0;
  double C0 = 0.0;
  double C1 = 0.0;
  double worst_ratio = 0.0;
  bool feasible = false;
  std::vector<MomentAuditEntry> entries;
};

struct MomentAudit {
  bool queue_only = false;  // BQBS variant drops idleness
  int excluded_unstable = 0;
  std::vector<MomentAuditFit> fits;
};

/// Fits global constants (C0, C1) bounding the state-moment average by
/// C0 (1 + |x_hat(0)|^kappa) + C1 * (queue[+idleness])-moment average
/// simultaneously across all stable traces.
MomentAudit check_moment_bounds(const std::vector<TraceMoments>& traces,
                                const std::vector<double>& kappas,
                                bool queue_only);

struct ConvergenceEntry {
  int n = 0;
  ErgodicEstimate cost;
  ErgodicEstimate cost_queue;
  std::vector<ErgodicEstimate> cost_pools;
  std::vector<double> idleness_ratios;  // J_{c,j} / sum_j J_{c,j}
  double gap = 0.0;                     // |J^n - J_diffusion|
  double tv_distance = 0.0;
  double frac_outside_region = 0.0;
  double M0 = 0.0;
  std::int64_t jwc_fallbacks = 0;
  std::int64_t invariant_violations = 0;
  std::vector<std::uint64_t> seeds;
};

struct ConvergenceReport {
  std::vector<ConvergenceEntry> entries;
  ErgodicEstimate diffusion_cost;
  ErgodicEstimate diffusion_cost_queue;
  std::vector<ErgodicEstimate> diffusion_cost_pools;
  std::vector<double> diffusion_idleness_ratios;
  double gap_spearman = 0.0;       // rank correlation of gap against n
  double region_exit_spearman = 0.0;
  std::vector<double> theta;       // fairness targets when configured
  double fairness_epsilon = 0.0;   // max_j |ratio_j - theta_j| at largest n
  std::uint64_t config_hash = 0;
};

struct ConvergenceOptions {
  std::vector<int> n_list;
  std::vector<std::uint64_t> seeds = {1};
  double ctmc_horizon = 2000.0;
  double diffusion_horizon = 2000.0;
  double step = 0.005;
  double burn_in_frac = 0.1;
  int batches = 32;
  double C_tilde = 0.5;
  GridSpec grid;
  std::vector<double> theta;  // optional fairness targets
  JwcRegionOptions region_opts;
};

/// Runs the CTMC under the concatenated policy of `control` at each n and
/// the diffusion under the same control, and reports cost gaps, shared-grid
/// occupation-measure TV distances, and region-exit fractions against n.
ConvergenceReport convergence_experiment(const NetworkTopology& topo,
                                         const LimitParams& limit,
                                         const MarkovControl& control,
                                         const CostParams& costs,
                                         const ConvergenceOptions& opts);

}  // namespace hwsim
