#include "hwsim/fluid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hwsim {

namespace {

// Shared peeling engine: resolves each tree edge exactly once by repeatedly
// clearing a node with a single unresolved incident edge.
template <typename VecT, typename MatT>
MatT peel(const NetworkTopology& topo, VecT alpha, VecT beta) {
  const int I = topo.num_classes();
  const int J = topo.num_pools();
  MatT out = MatT::Zero(I, J);
  std::vector<int> degree(I + J, 0);
  for (auto [i, j] : topo.edges()) {
    ++degree[i];
    ++degree[I + j];
  }
  std::vector<std::vector<int>> pools(topo.num_classes());
  std::vector<std::vector<int>> classes(topo.num_pools());
  for (int i = 0; i < I; ++i) pools[i] = topo.pools_of(i);
  for (int j = 0; j < J; ++j) classes[j] = topo.classes_of(j);
  std::vector<char> done(static_cast<std::size_t>(I) * J, 0);
  auto did = [&](int i, int j) -> char& {
    return done[static_cast<std::size_t>(i) * J + j];
  };

  std::vector<int> stack;
  for (int v = 0; v < I + J; ++v)
    if (degree[v] == 1) stack.push_back(v);

  int resolved = 0;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (degree[v] != 1) continue;
    if (v < I) {
      const int i = v;
      for (int j : pools[i]) {
        if (did(i, j)) continue;
        out(i, j) = alpha[i];
        beta[j] -= alpha[i];
        alpha[i] = 0;
        did(i, j) = 1;
        ++resolved;
        degree[i] = 0;
        if (--degree[I + j] == 1) stack.push_back(I + j);
        break;
      }
    } else {
      const int j = v - I;
      for (int i : classes[j]) {
        if (did(i, j)) continue;
        out(i, j) = beta[j];
        alpha[i] -= beta[j];
        beta[j] = 0;
        did(i, j) = 1;
        ++resolved;
        degree[I + j] = 0;
        if (--degree[i] == 1) stack.push_back(i);
        break;
      }
    }
  }
  if (resolved != topo.num_edges())
    throw Error(ErrorCode::StructureViolation,
                "tree peeling stalled; topology is not a tree");
  return out;
}

}  // namespace

Mat psi_map(const NetworkTopology& topo, const Vec& alpha, const Vec& beta) {
  if (alpha.size() != topo.num_classes() || beta.size() != topo.num_pools())
    throw Error(ErrorCode::DomainViolation, "psi_map input has wrong size");
  if (std::abs(alpha.sum() - beta.sum()) > 1e-9)
    throw Error(ErrorCode::DomainViolation,
                "psi_map requires e.alpha == e.beta (got " +
                    std::to_string(alpha.sum()) + " vs " +
                    std::to_string(beta.sum()) + ")");
  return peel<Vec, Mat>(topo, alpha, beta);
}

IntMat psi_map_int(const NetworkTopology& topo, const IntVec& alpha,
                   const IntVec& beta) {
  if (alpha.size() != topo.num_classes() || beta.size() != topo.num_pools())
    throw Error(ErrorCode::DomainViolation, "psi_map input has wrong size");
  if (alpha.sum() != beta.sum())
    throw Error(ErrorCode::DomainViolation,
                "psi_map requires e.alpha == e.beta");
  return peel<IntVec, IntMat>(topo, alpha, beta);
}

FluidSolution solve_fluid(const NetworkTopology& topo,
                          const LimitParams& limit) {
  const int I = topo.num_classes();
  const int J = topo.num_pools();
  const int E = topo.num_edges();

  Mat A = Mat::Zero(I + J, E);
  Vec b(I + J);
  for (int e = 0; e < E; ++e) {
    auto [i, j] = topo.edges()[e];
    A(i, e) = limit.mu(i, j) * limit.nu[j];
    A(I + j, e) = 1.0;
  }
  b.head(I) = limit.lambda;
  b.tail(J).setOnes();

  const Vec xi = A.completeOrthogonalDecomposition().solve(b);
  const double residual = (A * xi - b).cwiseAbs().maxCoeff();
  if (residual > 1e-9)
    throw Error(ErrorCode::NotCriticallyLoaded,
                "fluid system residual " + std::to_string(residual) +
                    " exceeds 1e-9; parameters are not critically loaded");

  FluidSolution sol;
  sol.xi_star = Mat::Zero(I, J);
  for (int e = 0; e < E; ++e) {
    auto [i, j] = topo.edges()[e];
    if (xi[e] < 1e-9)
      throw Error(ErrorCode::ResourcePoolingViolated,
                  "xi* on edge " + std::to_string(i + 1) + " " +
                      std::to_string(j + 1) + " is not positive (" +
                      std::to_string(xi[e]) + ")");
    sol.xi_star(i, j) = xi[e];
  }
  sol.z_star = sol.xi_star * limit.nu.asDiagonal();
  sol.x_star = sol.z_star.rowwise().sum();
  return sol;
}

Vec drift_offset(const NetworkTopology& topo, const LimitParams& limit,
                 const FluidSolution& fluid) {
  Vec ell = limit.lambda_hat;
  for (auto [i, j] : topo.edges()) ell[i] -= limit.mu_hat(i, j) * fluid.z_star(i, j);
  return ell;
}

Vec psi_drift(const NetworkTopology& topo, const LimitParams& limit,
              const Vec& ell, const Vec& x, const Control& u) {
  const double ex = x.sum();
  const double exp_ = pos_part(ex);
  const double exm = neg_part(ex);
  const Vec alpha = x - exp_ * u.uc;
  const Vec beta = -exm * u.us;
  const Mat psi_hat = peel<Vec, Mat>(topo, alpha, beta);
  Vec b = ell;
  for (auto [i, j] : topo.edges()) b[i] -= limit.mu(i, j) * psi_hat(i, j);
  b -= exp_ * (limit.gamma.array() * u.uc.array()).matrix();
  return b;
}

namespace {

constexpr double kZeroTol = 1e-10;

struct DriftProbe {
  const NetworkTopology& topo;
  const LimitParams& limit;
  Vec ell;

  Vec at(const Vec& x, const Control& u) const {
    return psi_drift(topo, limit, ell, x, u);
  }
};

}  // namespace

DriftMatrices extract_drift_matrices(const NetworkTopology& topo,
                                     const LimitParams& limit,
                                     const FluidSolution& fluid) {
  const int I = topo.num_classes();
  const int J = topo.num_pools();
  Control u0{Vec::Constant(I, 1.0 / I), Vec::Constant(J, 1.0 / J)};

  DriftProbe probe{topo, limit, Vec::Zero(I)};
  probe.ell = drift_offset(topo, limit, fluid);

  DriftMatrices dm;
  dm.ell = probe.ell;

  // Action of B1 on the hyperplane {e.x = 0}: there the u terms of the
  // drift vanish and b = ell - B1 x.
  Mat A = Mat::Zero(I, I);
  for (int k = 0; k + 1 < I; ++k) {
    Vec h = Vec::Zero(I);
    h[k] = 1.0;
    h[I - 1] = -1.0;
    const Vec m = probe.ell - probe.at(h, u0);  // = B1 h
    A += m * (Vec::Unit(I, k) - Vec::Constant(I, 1.0 / I)).transpose();
  }

  // Probes along -e with corner idleness controls give
  // w_j = B1 e + I * B2 e_j; the e-component of B1 (one vector g) plus the
  // triangular structure pin everything else down.
  Mat W(I, J);
  for (int j = 0; j < J; ++j) {
    Control u{u0.uc, Vec::Unit(J, j)};
    W.col(j) = probe.at(Vec::Constant(I, -1.0), u) - probe.ell;
  }

  Vec g = Vec::Zero(I);
  std::vector<int> order;
  std::vector<char> chosen(I, 0);
  for (int step = 0; step < I; ++step) {
    int pick = -1;
    double pick_common = 0.0;
    for (int i = 0; i < I && pick < 0; ++i) {
      if (chosen[i]) continue;
      // Entries of row i on not-yet-eliminated columns must coincide
      // (they share the unknown gauge g_i), and the implied diagonal
      // must be positive.
      double common = 0.0;
      bool first = true;
      bool ok = true;
      for (int j = 0; j < I; ++j) {
        if (chosen[j] || j == i) continue;
        if (first) {
          common = A(i, j);
          first = false;
        } else if (std::abs(A(i, j) - common) > kZeroTol) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      if (first) {
        // Last class standing: no zero constraints; match the mean of the
        // -e probes so B2 stays small in this row.
        common = -W.row(i).mean() / I;
        if (A(i, i) - common <= kZeroTol) common = A(i, i) - 1.0;
      }
      if (A(i, i) - common > kZeroTol) {
        pick = i;
        pick_common = common;
      }
    }
    if (pick < 0)
      throw Error(ErrorCode::StructureViolation,
                  "no class ordering renders B1 lower-triangular with "
                  "positive diagonal");
    chosen[pick] = 1;
    order.push_back(pick);
    g[pick] = -static_cast<double>(I) * pick_common;
  }

  dm.B1 = A + g * Vec::Constant(I, 1.0 / I).transpose();
  dm.B2 = (W - g * Vec::Ones(J).transpose()) / static_cast<double>(I);
  dm.elimination_order = order;

  auto snap = [](Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        if (std::abs(m(r, c)) < kZeroTol) m(r, c) = 0.0;
  };
  snap(dm.B1);
  snap(dm.B2);
  return dm;
}

Vec drift_from_matrices(const DriftMatrices& dm, const Vec& gamma, const Vec& x,
                        const Control& u) {
  const double ex = x.sum();
  const double exp_ = pos_part(ex);
  const double exm = neg_part(ex);
  return dm.ell - dm.B1 * (x - exp_ * u.uc) + exm * (dm.B2 * u.us) -
         exp_ * (gamma.array() * u.uc.array()).matrix();
}

}  // namespace hwsim
