#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "hwsim/diffusion.hpp"
#include "hwsim/fluid.hpp"
#include "hwsim/topology.hpp"
#include "hwsim/types.hpp"

namespace hwsim {

/// Queue lengths q_i = x_i - sum_j z_ij for an allocation z.
IntVec queue_of(const IntVec& x, const IntMat& z);
/// Idleness y_j = N_j^n - sum_i z_ij.
IntVec idleness_of(const ScaledParams& scaled, const IntMat& z);

/// True when z lies in the action set Z^n(x): componentwise feasible and
/// work conserving edgewise (q_i ^ y_j = 0 for every edge).
bool in_action_set(const NetworkTopology& topo, const ScaledParams& scaled,
                   const IntVec& x, const IntMat& z);

/// Nominal splits N_ij^n of pool capacity at the fluid equilibrium and the
/// shifted splits of the capacity-shift construction. The shift guarantees
/// every zero-abandonment class a service-rate margin of 2*C_tilde*sqrt(n)
/// over its nominal allocation.
struct CapacityShift {
  IntMat N_ij;        // largest-remainder split of xi*_ij N_j^n
  IntMat N_tilde_ij;  // shifted splits, column sums preserved
  IntVec N_tilde_i;   // row sums of the shifted splits
  double C_tilde = 0.0;
  double C_hat = 0.0;  // realized max |N_ij - N_tilde_ij| / sqrt(n)
};

CapacityShift build_capacity_shift(const NetworkTopology& topo,
                                   const ScaledParams& scaled,
                                   const FluidSolution& fluid, double C_tilde);

/// Nominal splits without any shift (valid as a BSP basis when every class
/// abandons, and used as an exploratory fallback otherwise).
CapacityShift unshifted_capacity_split(const NetworkTopology& topo,
                                       const ScaledParams& scaled,
                                       const FluidSolution& fluid);

/// Balanced saturation decision at headcount x: classes at or below their
/// shifted allocation are fully served within their nominal splits; classes
/// above keep at least the splits, with excess water-filled into idle
/// capacity so that no compatible server idles against a queue.
IntMat bsp_decide(const NetworkTopology& topo, const ScaledParams& scaled,
                  const CapacityShift& shift, const IntVec& x);

/// The measurable rounding map: floors all but the last coordinate, which
/// absorbs the remainder; preserves the (integer) total exactly.
IntVec rounding_map(const Vec& v);

/// Certified joint-work-conservation region: the l1 ball of radius
/// M0 * n around the fluid center n x*.
struct JwcRegion {
  int n = 0;
  double M0 = 0.0;
  Vec center;  // n x*

  bool contains(const IntVec& x) const;
};

struct JwcRegionOptions {
  int samples = 10000;
  double granularity = 1.0 / 1024.0;
  std::uint64_t seed = 12345;
};

/// Certifies the largest M0 (bisection at the given granularity) such that
/// uniformly sampled states of the ball admit a JWC allocation through Psi
/// for every split of total queue/idleness across classes/pools.
JwcRegion certify_jwc_region(const NetworkTopology& topo,
                             const ScaledParams& scaled,
                             const FluidSolution& fluid,
                             const JwcRegionOptions& opts = {});

/// Exact feasibility of a single state: Psi(x - q, N^n - y) >= 0 for all
/// corner splits (hence for every (q, y) in Theta^n(x) by linearity).
bool jwc_feasible(const NetworkTopology& topo, const ScaledParams& scaled,
                  const IntVec& x);

/// Scheduling decision induced by a diffusion Markov control: queue and
/// idleness totals (e.(x - N^n))^+- are split by the control through the
/// rounding map and completed to an allocation by exact integer peeling.
IntMat canonical_jwc_decide(const NetworkTopology& topo,
                            const ScaledParams& scaled,
                            const FluidSolution& fluid,
                            const MarkovControl& control, const IntVec& x);

/// Stationary Markov scheduling policies z : x -> Z^n(x).
class SchedulingPolicy {
 public:
  virtual ~SchedulingPolicy() = default;
  virtual IntMat decide(const IntVec& x) const = 0;
  virtual std::string name() const = 0;
};

class BspPolicy final : public SchedulingPolicy {
 public:
  BspPolicy(const NetworkTopology& topo, const ScaledParams& scaled,
            CapacityShift shift)
      : topo_(topo), scaled_(scaled), shift_(std::move(shift)) {}

  IntMat decide(const IntVec& x) const override {
    return bsp_decide(topo_, scaled_, shift_, x);
  }
  std::string name() const override { return "bsp"; }
  const CapacityShift& shift() const { return shift_; }

 private:
  const NetworkTopology& topo_;
  const ScaledParams& scaled_;
  CapacityShift shift_;
};

class CanonicalJwcPolicy final : public SchedulingPolicy {
 public:
  CanonicalJwcPolicy(const NetworkTopology& topo, const ScaledParams& scaled,
                     const FluidSolution& fluid, MarkovControl control)
      : topo_(topo), scaled_(scaled), fluid_(fluid), control_(std::move(control)) {}

  IntMat decide(const IntVec& x) const override {
    return canonical_jwc_decide(topo_, scaled_, fluid_, control_, x);
  }
  std::string name() const override { return "canonical"; }

 private:
  const NetworkTopology& topo_;
  const ScaledParams& scaled_;
  const FluidSolution& fluid_;
  MarkovControl control_;
};

/// Canonical JWC policy inside the certified region, BSP outside.
class ConcatenatedPolicy final : public SchedulingPolicy {
 public:
  ConcatenatedPolicy(const NetworkTopology& topo, const ScaledParams& scaled,
                     const FluidSolution& fluid, MarkovControl control,
                     CapacityShift shift, JwcRegion region)
      : topo_(topo),
        scaled_(scaled),
        fluid_(fluid),
        control_(std::move(control)),
        shift_(std::move(shift)),
        region_(std::move(region)) {}

  IntMat decide(const IntVec& x) const override;
  std::string name() const override { return "concatenated"; }
  const JwcRegion& region() const { return region_; }
  /// In-region states where Psi produced an infeasible allocation and the
  /// BSP branch was used instead; stays zero when the certificate is tight.
  std::int64_t fallback_count() const { return fallbacks_.load(); }

 private:
  const NetworkTopology& topo_;
  const ScaledParams& scaled_;
  const FluidSolution& fluid_;
  MarkovControl control_;
  CapacityShift shift_;
  JwcRegion region_;
  mutable std::atomic<std::int64_t> fallbacks_{0};
};

}  // namespace hwsim
