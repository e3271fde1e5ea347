#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hwsim/diffusion.hpp"
#include "hwsim/fluid.hpp"
#include "hwsim/policies.hpp"
#include "hwsim/stats.hpp"
#include "hwsim/topology.hpp"
#include "hwsim/types.hpp"

namespace hwsim {

/// Transition rates of the CTMC at one state under an allocation z; the
/// terms mirror the generator: arrivals lambda_i^n, services mu_ij^n z_ij,
/// abandonments gamma_i^n q_i.
struct EventRates {
  Vec arrival;  // per class
  Mat service;  // per edge
  Vec abandon;  // per class
  double total = 0.0;
};

EventRates build_event_rates(const NetworkTopology& topo,
                             const ScaledParams& scaled, const IntVec& x,
                             const IntMat& z);

/// Sparse time-weighted histogram over diffusion-scaled state and control
/// cells; CTMC and diffusion runs share one grid so their occupation
/// measures are directly comparable.
struct GridSpec {
  double half_width = 10.0;  // state box [-hw, hw] per coordinate
  double cell = 0.25;
  double u_cell = 0.25;  // control coordinates live in [0, 1]
  bool include_u = true;
};

class EmpiricalMeasure {
 public:
  EmpiricalMeasure(GridSpec spec, int num_classes, int num_pools);

  void add(const Vec& x_hat, const Control& u, double weight);
  void merge(const EmpiricalMeasure& other);

  double total_mass() const { return total_; }
  /// Fraction of mass outside the state box.
  double outside_fraction() const { return total_ > 0 ? outside_ / total_ : 0.0; }
  const std::map<std::vector<std::int32_t>, double>& cells() const {
    return cells_;
  }
  const GridSpec& spec() const { return spec_; }

  /// Total variation distance between the normalized measures; grids must
  /// agree.
  double tv_distance(const EmpiricalMeasure& other) const;

 private:
  GridSpec spec_;
  int num_classes_;
  int num_pools_;
  std::map<std::vector<std::int32_t>, double> cells_;
  double outside_ = 0.0;
  double total_ = 0.0;
};

/// Control parameterization of an allocation: queue and idleness
/// proportions, with the convention u^c = e_I / u^s = e_J when the
/// respective total vanishes.
Control control_parameterization(const NetworkTopology& topo,
                                 const ScaledParams& scaled, const IntVec& q,
                                 const IntVec& y);

/// Compact replayable event log: state deltas plus holding times.
struct EventTrace {
  enum class EventKind : std::int8_t { Arrival = 0, Service = 1, Abandon = 2 };
  IntVec x0;
  struct Step {
    double dt;  // holding time in the state before this event
    EventKind kind;
    std::int16_t cls;
    std::int16_t pool;  // -1 except for service events
  };
  std::vector<Step> steps;
  double trailing_dt = 0.0;  // holding time of the final state

  static int delta(EventKind kind) {
    return kind == EventKind::Arrival ? +1 : -1;
  }
};

/// Time-weighted histogram of ||x_hat||_1 used for tail fits.
struct TailHistogram {
  double bin_width = 0.05;
  std::map<std::int64_t, double> mass;
  double total = 0.0;
};

struct TailFit {
  double slope = 0.0;
  double r_squared = 0.0;
  int levels = 0;
};

/// Least-squares fit of log P(||X_hat|| > r) against r over the observed
/// exceedance levels. Throws InsufficientTail below 10 usable levels.
TailFit tail_decay_fit(const TailHistogram& hist);

struct CtmcOptions {
  double horizon = 1000.0;
  double burn_in_frac = 0.1;
  int batches = 32;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  /// Instability guard on ||x - n x*||_inf, in headcounts.
  double explosion_guard = 1e6;
  std::vector<double> kappas = {1.0, 2.0, 4.0};
  bool record_trace = false;
  bool collect_tail = true;
  /// Exact per-event balance / work-conservation bookkeeping.
  bool check_invariants = true;
  std::optional<IntVec> x0;  // defaults to the integerized fluid center
};

struct CtmcResult {
  int n = 0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  std::int64_t num_events = 0;

  ErgodicEstimate cost;        // time average of r_hat(Q_hat, Y_hat)
  ErgodicEstimate cost_queue;  // queue-only running cost
  std::vector<ErgodicEstimate> cost_pools;  // per-pool idleness costs
  // per-batch means, kept so replications can be pooled
  std::vector<double> cost_batches;
  std::vector<double> cost_queue_batches;
  std::vector<std::vector<double>> cost_pool_batches;

  Vec x_hat0;
  double max_norm_xhat = 0.0;      // l1, diffusion scale
  double lemma22_ratio = 0.0;      // max of max(|q|,|y|,|z|_inf)/max(|x|,1)
  double frac_time_in_region = 0.0;
  std::int64_t invariant_violations = 0;
  std::int64_t region_jwc_violations = 0;

  std::vector<double> kappas;
  std::vector<double> moment_xhat;       // time avg of |x_hat|^kappa (Euclidean)
  std::vector<double> moment_queue_idle; // time avg of (1+|q|+|y|)^kappa (l1)
  std::vector<double> moment_queue;      // time avg of (1+|q|)^kappa

  TailHistogram tail;
  std::optional<EventTrace> trace;
};

/// Exact event-by-event simulation of the n-th system under a stationary
/// Markov policy. Rates are rebuilt after every transition, so allocations
/// follow the policy exactly; cost integrals are exact between events.
CtmcResult simulate_ctmc(const NetworkTopology& topo, const ScaledParams& scaled,
                         const FluidSolution& fluid,
                         const SchedulingPolicy& policy, const CostParams& costs,
                         const CtmcOptions& opts,
                         const JwcRegion* region = nullptr,
                         EmpiricalMeasure* hist = nullptr);

/// Concurrent replications with independent RNG streams keyed by
/// (seed, replication); results are merged in replication order.
std::vector<CtmcResult> simulate_replications(
    const NetworkTopology& topo, const ScaledParams& scaled,
    const FluidSolution& fluid, const SchedulingPolicy& policy,
    const CostParams& costs, const CtmcOptions& base,
    const std::vector<std::uint64_t>& seeds, const JwcRegion* region = nullptr,
    std::vector<EmpiricalMeasure>* hists = nullptr);

/// Replays a recorded trace into a time-weighted histogram of
/// (X_hat, U) under the given policy's allocations.
EmpiricalMeasure empirical_measure(const NetworkTopology& topo,
                                   const ScaledParams& scaled,
                                   const FluidSolution& fluid,
                                   const SchedulingPolicy& policy,
                                   const EventTrace& trace, double horizon,
                                   double burn_in, const GridSpec& grid);

}  // namespace hwsim
