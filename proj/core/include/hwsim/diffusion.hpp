#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hwsim/fluid.hpp"
#include "hwsim/stats.hpp"
#include "hwsim/topology.hpp"
#include "hwsim/types.hpp"

namespace hwsim {

/// Stationary Markov control: a map from diffusion-scaled state to a point
/// of the action set. Constant controls and nearest-neighbor lookup tables
/// are the two concrete kinds; closed forms plug in as callables.
class MarkovControl {
 public:
  static MarkovControl constant(Control u);
  /// Nearest-neighbor table over grid points in diffusion scale.
  static MarkovControl table(std::vector<Vec> points, std::vector<Control> controls);
  static MarkovControl closed_form(std::function<Control(const Vec&)> fn,
                                   std::string label = "closed-form");
  /// Reads a table from a structured-text file: one grid point per line,
  ///   x1 .. xI : uc1 .. ucI : us1 .. usJ
  static MarkovControl load_table(const std::string& path, int num_classes,
                                  int num_pools);

  Control operator()(const Vec& x_hat) const;
  const std::string& kind() const { return kind_; }

 private:
  MarkovControl() = default;
  std::string kind_;
  std::function<Control(const Vec&)> fn_;
};

/// The limiting controlled diffusion dX = b(X,U) dt + Sigma dW with
/// Sigma = diag(sqrt(2 lambda_i)) and Psi-based drift.
class DiffusionModel {
 public:
  DiffusionModel(const NetworkTopology& topo, const LimitParams& limit,
                 const FluidSolution& fluid);

  const Vec& ell() const { return ell_; }
  const Vec& sigma() const { return sigma_; }  // diagonal entries
  const Vec& gamma() const { return limit_.gamma; }
  int dim() const { return topo_.num_classes(); }
  const NetworkTopology& topology() const { return topo_; }
  const LimitParams& limit() const { return limit_; }

  Vec drift(const Vec& x, const Control& u) const;

 private:
  const NetworkTopology& topo_;
  const LimitParams& limit_;
  Vec ell_;
  Vec sigma_;
};

/// Smooth Lyapunov functions: polynomial V_{kappa,beta} agreeing with
/// ||x||_beta^kappa outside the unit beta-ball (polynomial blend inside,
/// matching value and first two radial derivatives at the boundary), and
/// the exponential variant exp(eps ||x||^2_beta / sqrt(1 + ||x||^2_beta)).
struct LyapunovSpec {
  enum class Kind { Polynomial, Exponential };
  Kind kind = Kind::Exponential;
  double kappa = 2.0;    // polynomial exponent, >= 1
  double epsilon = 0.01; // exponential scale, > 0
  Vec beta;              // positive weights, size I
  double delta = 0.1;    // cone parameter for K_delta checks

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  /// Diagonal of the Hessian (the generator only needs d^2/dx_i^2).
  Vec hessian_diag(const Vec& x) const;
};

/// Indicator of the cone K_delta = {|e.x| > delta |x|}; the plus variant
/// uses e.x > delta |x|.
bool in_cone(const Vec& x, double delta, bool plus_variant);

struct SdeOptions {
  double horizon = 1000.0;
  double step = 0.01;
  double burn_in_frac = 0.1;
  int batches = 32;
  double blowup_guard = 1e3;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  // Testing hook: zero noise reduces the SDE to the drift ODE.
  bool zero_noise = false;
};

struct CostParams {
  Vec xi;    // class weights, positive
  Vec zeta;  // pool weights, nonnegative
  double m = 1.0;
  double m_tilde = 1.0;
};

/// Running costs of the diffusion problems: r penalizes queue and idleness
/// through the control parameterization, r_o only the queue, r_j the
/// idleness of pool j.
double running_cost(const CostParams& costs, const Vec& x, const Control& u);
double running_cost_queue(const CostParams& costs, const Vec& x, const Control& u);
double running_cost_pool(const CostParams& costs, const Vec& x, const Control& u,
                         int j);

struct SdePathSummary {
  double horizon = 0.0;
  double step = 0.0;
  std::uint64_t seed = 0;
  ErgodicEstimate cost;                // J for r
  ErgodicEstimate cost_queue;          // J_o
  std::vector<ErgodicEstimate> cost_pools;  // J_{c,j}
  std::vector<double> cost_batches;
  std::vector<double> cost_queue_batches;
  std::vector<std::vector<double>> cost_pool_batches;
  double max_norm = 0.0;
  Vec final_state;
  // Time averages of |X|^kappa for the configured kappa set.
  std::vector<double> kappas;
  std::vector<double> moment_averages;
};

class EmpiricalMeasure;  // defined in ctmc.hpp (shared grid with the CTMC)

SdePathSummary simulate_sde(const DiffusionModel& model,
                            const MarkovControl& control, const Vec& x0,
                            const CostParams& costs, const SdeOptions& opts,
                            EmpiricalMeasure* hist = nullptr);

/// Extended generator applied to a C^2 test function:
///   L^u f(x) = sum_i [ lambda_i d_ii f + b_i(x,u) d_i f ].
double generator_apply(const DiffusionModel& model,
                       const std::function<Vec(const Vec&)>& grad,
                       const std::function<Vec(const Vec&)>& hess_diag,
                       const Vec& x, const Control& u);

}  // namespace hwsim
