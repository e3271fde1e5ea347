#pragma once

#include <vector>

#include "hwsim/topology.hpp"
#include "hwsim/types.hpp"

namespace hwsim {

/// Static fluid equilibrium of a critically loaded tree network.
struct FluidSolution {
  Mat xi_star;  // I x J, fraction of pool j's capacity on class i
  Vec x_star;   // I, fluid headcounts
  Mat z_star;   // I x J, fluid allocations z*_ij = xi*_ij nu_j
};

/// Solves the critical-load allocation system
///   sum_j mu_ij nu_j xi_ij = lambda_i,  sum_i xi_ij = 1,  xi_ij = 0 off edges
/// by least-norm linear solve. Residual tolerance 1e-9.
FluidSolution solve_fluid(const NetworkTopology& topo, const LimitParams& limit);

/// The unique allocation matrix on a tree with row sums alpha, column sums
/// beta, and zeros off edges, computed by peeling leaf nodes.
/// Requires |e.alpha - e.beta| <= 1e-9.
Mat psi_map(const NetworkTopology& topo, const Vec& alpha, const Vec& beta);

/// Exact integer variant (no round-off); requires e.alpha == e.beta.
IntMat psi_map_int(const NetworkTopology& topo, const IntVec& alpha,
                   const IntVec& beta);

/// Second-order drift offset: ell_i = lambda_hat_i - sum_j mu_hat_ij z*_ij.
Vec drift_offset(const NetworkTopology& topo, const LimitParams& limit,
                 const FluidSolution& fluid);

/// Drift of the limiting diffusion evaluated through the Psi map:
///   b_i = ell_i - sum_j mu_ij PsiHat_ij[u](x) - gamma_i (e.x)^+ uc_i
/// with PsiHat[u](x) = Psi(x - (e.x)^+ u^c, -(e.x)^- u^s).
Vec psi_drift(const NetworkTopology& topo, const LimitParams& limit,
              const Vec& ell, const Vec& x, const Control& u);

/// Structured form of the drift: b = ell - B1 (x - (e.x)^+ u^c)
///   + (e.x)^- B2 u^s - (e.x)^+ Gamma u^c.
/// B1 is lower-triangular with positive diagonal after permuting classes
/// by elimination_order.
struct DriftMatrices {
  Vec ell;
  Mat B1;
  Mat B2;
  std::vector<int> elimination_order;
};

DriftMatrices extract_drift_matrices(const NetworkTopology& topo,
                                     const LimitParams& limit,
                                     const FluidSolution& fluid);

/// Evaluates the structured drift form (the reconstruction side of the
/// identity checked against psi_drift).
Vec drift_from_matrices(const DriftMatrices& dm, const Vec& gamma, const Vec& x,
                        const Control& u);

}  // namespace hwsim
