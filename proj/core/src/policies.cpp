#include "hwsim/policies.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "hwsim/rng.hpp"
#include "hwsim/stats.hpp"

namespace hwsim {

IntVec queue_of(const IntVec& x, const IntMat& z) {
  return x - z.rowwise().sum();
}

IntVec idleness_of(const ScaledParams& scaled, const IntMat& z) {
  return scaled.N_n - z.colwise().sum().transpose();
}

bool in_action_set(const NetworkTopology& topo, const ScaledParams& scaled,
                   const IntVec& x, const IntMat& z) {
  if (z.minCoeff() < 0) return false;
  for (int i = 0; i < topo.num_classes(); ++i)
    for (int j = 0; j < topo.num_pools(); ++j)
      if (z(i, j) != 0 && !topo.has_edge(i, j)) return false;
  const IntVec q = queue_of(x, z);
  const IntVec y = idleness_of(scaled, z);
  if (q.minCoeff() < 0 || y.minCoeff() < 0) return false;
  for (auto [i, j] : topo.edges())
    if (std::min(q[i], y[j]) != 0) return false;
  return true;
}

CapacityShift unshifted_capacity_split(const NetworkTopology& topo,
                                       const ScaledParams& scaled,
                                       const FluidSolution& fluid) {
  const int I = topo.num_classes();
  const int J = topo.num_pools();
  CapacityShift shift;
  shift.N_ij = IntMat::Zero(I, J);
  for (int j = 0; j < J; ++j) {
    const auto& classes = topo.classes_of(j);
    std::vector<double> weights;
    weights.reserve(classes.size());
    for (int i : classes) weights.push_back(fluid.xi_star(i, j));
    const auto split = largest_remainder(weights, scaled.N_n[j]);
    for (std::size_t k = 0; k < classes.size(); ++k)
      shift.N_ij(classes[k], j) = split[k];
  }
  shift.N_tilde_ij = shift.N_ij;
  shift.N_tilde_i = shift.N_tilde_ij.rowwise().sum();
  shift.C_tilde = 0.0;
  shift.C_hat = 0.0;
  return shift;
}

CapacityShift build_capacity_shift(const NetworkTopology& topo,
                                   const ScaledParams& scaled,
                                   const FluidSolution& fluid, double C_tilde) {
  if (C_tilde <= 0)
    throw Error(ErrorCode::ConfigError, "C_tilde must be positive");
  const int I = topo.num_classes();
  const int J = topo.num_pools();

  std::vector<int> zero_gamma;
  int anchor = -1;
  for (int i = 0; i < I; ++i) {
    if (scaled.gamma_n[i] == 0.0)
      zero_gamma.push_back(i);
    else if (anchor < 0)
      anchor = i;
  }

  CapacityShift shift = unshifted_capacity_split(topo, scaled, fluid);
  shift.C_tilde = C_tilde;
  if (zero_gamma.empty()) return shift;
  if (anchor < 0)
    throw Error(ErrorCode::NoAnchorClass,
                "capacity shift needs a class with positive abandonment");

  // psi solves: column sums zero per pool, weighted row sums 3*C_tilde for
  // every zero-abandonment class. Rooting the tree at the anchor class and
  // sweeping bottom-up pins each class's parent edge from its subtree; the
  // anchor absorbs the balance.
  Mat psi = Mat::Zero(I, J);
  const int total = I + J;
  std::vector<int> parent(total, -1);
  std::vector<int> bfs_order;
  std::vector<char> seen(total, 0);
  bfs_order.push_back(anchor);
  seen[anchor] = 1;
  for (std::size_t head = 0; head < bfs_order.size(); ++head) {
    const int v = bfs_order[head];
    if (v < I) {
      for (int j : topo.pools_of(v))
        if (!seen[I + j]) {
          seen[I + j] = 1;
          parent[I + j] = v;
          bfs_order.push_back(I + j);
        }
    } else {
      for (int i : topo.classes_of(v - I))
        if (!seen[i]) {
          seen[i] = 1;
          parent[i] = v;
          bfs_order.push_back(i);
        }
    }
  }
  const double target = 3.0 * C_tilde;
  for (auto it = bfs_order.rbegin(); it != bfs_order.rend(); ++it) {
    const int v = *it;
    if (v < I) {
      const int i = v;
      if (i == anchor) continue;
      const int pj = parent[i] - I;
      double below = 0.0;
      for (int j : topo.pools_of(i))
        if (j != pj) below += scaled.mu_n(i, j) * psi(i, j);
      const double want = scaled.gamma_n[i] == 0.0 ? target : 0.0;
      psi(i, pj) = (want - below) / scaled.mu_n(i, pj);
    } else {
      const int j = v - I;
      const int pi = parent[v];
      double below = 0.0;
      for (int i : topo.classes_of(j))
        if (i != pi) below += psi(i, j);
      psi(pi, j) = -below;
    }
  }

  const double rn = std::sqrt(static_cast<double>(scaled.n));
  for (int j = 0; j < J; ++j) {
    const auto& classes = topo.classes_of(j);
    if (classes.size() == 1) continue;  // singleton pools keep their split
    std::int64_t assigned = 0;
    for (std::size_t k = 0; k + 1 < classes.size(); ++k) {
      const int i = classes[k];
      shift.N_tilde_ij(i, j) =
          shift.N_ij(i, j) +
          static_cast<std::int64_t>(std::floor(psi(i, j) * rn));
      assigned += shift.N_tilde_ij(i, j);
    }
    shift.N_tilde_ij(classes.back(), j) = scaled.N_n[j] - assigned;
  }
  shift.N_tilde_i = shift.N_tilde_ij.rowwise().sum();

  if (shift.N_tilde_ij.minCoeff() < 0)
    throw Error(ErrorCode::InfeasibleShift,
                "shifted split has a negative entry at n = " +
                    std::to_string(scaled.n) + "; n too small for C_tilde = " +
                    std::to_string(C_tilde));
  for (int i : zero_gamma) {
    double margin = 0.0;
    for (int j : topo.pools_of(i))
      margin += scaled.mu_n(i, j) *
                static_cast<double>(shift.N_tilde_ij(i, j) - shift.N_ij(i, j));
    if (margin < 2.0 * C_tilde * rn)
      throw Error(ErrorCode::InfeasibleShift,
                  "shift margin " + std::to_string(margin) + " of class " +
                      std::to_string(i + 1) + " is below 2*C_tilde*sqrt(n) at n = " +
                      std::to_string(scaled.n));
  }
  shift.C_hat = static_cast<double>(
                    (shift.N_ij - shift.N_tilde_ij).cwiseAbs().maxCoeff()) /
                rn;
  return shift;
}

IntMat bsp_decide(const NetworkTopology& topo, const ScaledParams& scaled,
                  const CapacityShift& shift, const IntVec& x) {
  const int I = topo.num_classes();
  const int J = topo.num_pools();
  if (x.size() != I || x.minCoeff() < 0)
    throw Error(ErrorCode::DomainViolation, "state must be a nonnegative I-vector");

  IntMat z = IntMat::Zero(I, J);
  // Phase 1: each class takes min(x_i, N~_i) servers, filling pools in
  // peel order up to the shifted splits.
  for (int i = 0; i < I; ++i) {
    std::int64_t rem = std::min(x[i], shift.N_tilde_i[i]);
    for (int j : topo.pool_fill_order(i)) {
      const std::int64_t take = std::min(rem, shift.N_tilde_ij(i, j));
      z(i, j) = take;
      rem -= take;
    }
  }
  // Phase 2: excess jobs of saturated classes absorb idle capacity.
  IntVec q = queue_of(x, z);
  IntVec y = idleness_of(scaled, z);
  for (int i = 0; i < I; ++i) {
    if (q[i] <= 0) continue;
    for (int j : topo.pool_fill_order(i)) {
      const std::int64_t d = std::min(q[i], y[j]);
      z(i, j) += d;
      q[i] -= d;
      y[j] -= d;
      if (q[i] == 0) break;
    }
  }
  if (!in_action_set(topo, scaled, x, z))
    throw Error(ErrorCode::StructureViolation,
                "BSP produced an allocation outside the action set");
  return z;
}

IntVec rounding_map(const Vec& v) {
  const double total = v.sum();
  const auto itotal = static_cast<std::int64_t>(std::llround(total));
  if (std::abs(total - static_cast<double>(itotal)) > 1e-9)
    throw Error(ErrorCode::DomainViolation,
                "rounding map requires an integer total, got " +
                    std::to_string(total));
  if (v.size() > 0 && v.minCoeff() < -1e-9)
    throw Error(ErrorCode::DomainViolation, "rounding map requires v >= 0");
  const auto d = v.size();
  IntVec out(d);
  std::int64_t assigned = 0;
  for (Eigen::Index k = 0; k + 1 < d; ++k) {
    out[k] = static_cast<std::int64_t>(std::floor(std::max(v[k], 0.0)));
    assigned += out[k];
  }
  out[d - 1] = itotal - assigned;
  return out;
}

bool JwcRegion::contains(const IntVec& x) const {
  double dist = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    dist += std::abs(static_cast<double>(x[i]) - center[i]);
  return dist <= M0 * n;
}

bool jwc_feasible(const NetworkTopology& topo, const ScaledParams& scaled,
                  const IntVec& x) {
  const int I = topo.num_classes();
  const int J = topo.num_pools();
  const std::int64_t imbalance = x.sum() - scaled.N_n.sum();
  const std::int64_t mp = std::max<std::int64_t>(imbalance, 0);
  const std::int64_t mm = std::max<std::int64_t>(-imbalance, 0);
  // Psi is linear, so nonnegativity over all splits in Theta^n(x) reduces
  // to the corner splits (all queue on one class, all idleness in one pool).
  for (int i0 = 0; i0 < I; ++i0) {
    IntVec alpha = x;
    alpha[i0] -= mp;
    if (alpha[i0] < 0) return false;
    for (int j0 = 0; j0 < J; ++j0) {
      IntVec beta = scaled.N_n;
      beta[j0] -= mm;
      if (beta[j0] < 0) return false;
      if (psi_map_int(topo, alpha, beta).minCoeff() < 0) return false;
      if (mm == 0) break;
    }
    if (mp == 0) break;
  }
  return true;
}

namespace {

std::uint64_t region_fingerprint(const NetworkTopology& topo,
                                 const ScaledParams& scaled,
                                 const JwcRegionOptions& opts) {
  std::string blob;
  for (auto [i, j] : topo.edges()) {
    blob += std::to_string(i) + "," + std::to_string(j) + ";";
  }
  blob += "|n=" + std::to_string(scaled.n);
  for (int j = 0; j < topo.num_pools(); ++j)
    blob += "," + std::to_string(scaled.N_n[j]);
  blob += "|s=" + std::to_string(opts.samples) +
          ",g=" + std::to_string(opts.granularity) +
          ",r=" + std::to_string(opts.seed);
  return fnv1a(blob);
}

std::mutex region_cache_mutex;
std::map<std::uint64_t, JwcRegion>& region_cache() {
  static std::map<std::uint64_t, JwcRegion> cache;
  return cache;
}

}  // namespace

JwcRegion certify_jwc_region(const NetworkTopology& topo,
                             const ScaledParams& scaled,
                             const FluidSolution& fluid,
                             const JwcRegionOptions& opts) {
  const std::uint64_t key = region_fingerprint(topo, scaled, opts);
  {
    std::lock_guard<std::mutex> lock(region_cache_mutex);
    auto it = region_cache().find(key);
    if (it != region_cache().end()) return it->second;
  }

  const int I = topo.num_classes();
  JwcRegion region;
  region.n = scaled.n;
  region.center = static_cast<double>(scaled.n) * fluid.x_star;

  auto ball_ok = [&](double M0, std::uint64_t stream) {
    if (M0 <= 0) return true;
    Philox rng(opts.seed, stream);
    const double radius = M0 * scaled.n;
    int tested = 0;
    int attempts = 0;
    while (tested < opts.samples && attempts < 20 * opts.samples) {
      ++attempts;
      // uniform in the l1 ball: Dirichlet magnitudes, random signs,
      // radius scaled by U^(1/I)
      const Vec w = rng.simplex(I);
      const double r = radius * std::pow(rng.uniform(), 1.0 / I);
      IntVec x(I);
      double dist = 0.0;
      bool valid = true;
      for (int i = 0; i < I; ++i) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double target = region.center[i] + sign * w[i] * r;
        x[i] = std::max<std::int64_t>(0, std::llround(target));
        dist += std::abs(static_cast<double>(x[i]) - region.center[i]);
        if (dist > radius) {
          valid = false;
          break;
        }
      }
      if (!valid) continue;
      ++tested;
      if (!jwc_feasible(topo, scaled, x)) return false;
    }
    return true;
  };

  double lo = 0.0;
  double hi = fluid.x_star.sum() * 2.0;
  std::uint64_t stream = 1;
  if (ball_ok(hi, stream++)) {
    lo = hi;
  } else {
    while (hi - lo > opts.granularity) {
      const double mid = 0.5 * (lo + hi);
      if (ball_ok(mid, stream++))
        lo = mid;
      else
        hi = mid;
    }
  }
  region.M0 = lo;

  std::lock_guard<std::mutex> lock(region_cache_mutex);
  region_cache().emplace(key, region);
  return region;
}

IntMat canonical_jwc_decide(const NetworkTopology& topo,
                            const ScaledParams& scaled,
                            const FluidSolution& fluid,
                            const MarkovControl& control, const IntVec& x) {
  const std::int64_t imbalance = x.sum() - scaled.N_n.sum();
  const auto mp = static_cast<double>(std::max<std::int64_t>(imbalance, 0));
  const auto mm = static_cast<double>(std::max<std::int64_t>(-imbalance, 0));
  const double rn = std::sqrt(static_cast<double>(scaled.n));
  Vec x_hat(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x_hat[i] = (static_cast<double>(x[i]) - scaled.n * fluid.x_star[i]) / rn;
  const Control u = control(x_hat);
  const IntVec q = rounding_map(mp * u.uc);
  const IntVec y = rounding_map(mm * u.us);
  const IntMat z = psi_map_int(topo, x - q, scaled.N_n - y);
  if (z.minCoeff() < 0)
    throw Error(ErrorCode::OutsideJwc,
                "state does not admit this JWC allocation (n = " +
                    std::to_string(scaled.n) + ")");
  return z;
}

IntMat ConcatenatedPolicy::decide(const IntVec& x) const {
  if (region_.contains(x)) {
    try {
      return canonical_jwc_decide(topo_, scaled_, fluid_, control_, x);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::OutsideJwc) throw;
      ++fallbacks_;  // certificate was optimistic here; keep the run alive
    }
  }
  return bsp_decide(topo_, scaled_, shift_, x);
}

}  // namespace hwsim
