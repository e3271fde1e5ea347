#include "hwsim/topology.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace hwsim {

NetworkTopology::NetworkTopology(int num_classes, int num_pools,
                                 std::vector<std::pair<int, int>> edges)
    : num_classes_(num_classes), num_pools_(num_pools), edges_(std::move(edges)) {
  if (num_classes_ < 1 || num_pools_ < 1)
    throw Error(ErrorCode::ConfigError, "network needs at least one class and pool");
  for (auto [i, j] : edges_) {
    if (i < 0 || i >= num_classes_ || j < 0 || j >= num_pools_)
      throw Error(ErrorCode::ConfigError, "edge endpoint out of range");
  }
  build_adjacency();
}

void NetworkTopology::build_adjacency() {
  edge_index_.assign(static_cast<std::size_t>(num_classes_) * num_pools_, -1);
  pools_of_.assign(num_classes_, {});
  classes_of_.assign(num_pools_, {});
  for (int e = 0; e < num_edges(); ++e) {
    auto [i, j] = edges_[e];
    if (edge_index_[idx(i, j)] >= 0)
      throw Error(ErrorCode::ConfigError, "duplicate edge in topology");
    edge_index_[idx(i, j)] = e;
    pools_of_[i].push_back(j);
    classes_of_[j].push_back(i);
  }
  for (auto& v : pools_of_) std::sort(v.begin(), v.end());
  for (auto& v : classes_of_) std::sort(v.begin(), v.end());

  // Leaf-peeling rounds over the bipartite graph. On non-tree inputs some
  // nodes never peel; they get the final round, which is harmless because
  // such topologies are rejected by validate_topology.
  const int total = num_classes_ + num_pools_;
  std::vector<int> degree(total, 0);
  for (auto [i, j] : edges_) {
    ++degree[i];
    ++degree[num_classes_ + j];
  }
  peel_round_.assign(total, total);
  std::vector<int> current;
  for (int v = 0; v < total; ++v)
    if (degree[v] <= 1) current.push_back(v);
  std::vector<char> removed(total, 0);
  int round = 0;
  while (!current.empty()) {
    std::vector<int> next;
    for (int v : current) {
      if (removed[v]) continue;
      removed[v] = 1;
      peel_round_[v] = round;
      if (v < num_classes_) {
        for (int j : pools_of_[v])
          if (!removed[num_classes_ + j] && --degree[num_classes_ + j] == 1)
            next.push_back(num_classes_ + j);
      } else {
        for (int i : classes_of_[v - num_classes_])
          if (!removed[i] && --degree[i] == 1) next.push_back(i);
      }
    }
    current = std::move(next);
    ++round;
  }

  pool_fill_order_ = pools_of_;
  for (auto& order : pool_fill_order_) {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return peel_round_[num_classes_ + a] < peel_round_[num_classes_ + b];
    });
  }
}

ValidationReport validate_topology(const NetworkTopology& topo) {
  ValidationReport report;
  const int I = topo.num_classes();
  const int J = topo.num_pools();
  for (int i = 0; i < I; ++i)
    if (topo.pools_of(i).empty())
      report.violations.push_back("class " + std::to_string(i + 1) +
                                  " has no compatible pool");
  for (int j = 0; j < J; ++j)
    if (topo.classes_of(j).empty())
      report.violations.push_back("pool " + std::to_string(j + 1) +
                                  " serves no class");
  if (topo.num_edges() != I + J - 1)
    report.violations.push_back(
        "edge count " + std::to_string(topo.num_edges()) + " differs from I+J-1 = " +
        std::to_string(I + J - 1) + (topo.num_edges() > I + J - 1
                                         ? " (graph has a cycle)"
                                         : " (graph is disconnected)"));

  // Connectivity by BFS from class 0 over the bipartite graph.
  std::vector<char> seen(static_cast<std::size_t>(I + J), 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 0;
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    ++reached;
    if (v < I) {
      for (int j : topo.pools_of(v))
        if (!seen[I + j]) {
          seen[I + j] = 1;
          frontier.push(I + j);
        }
    } else {
      for (int i : topo.classes_of(v - I))
        if (!seen[i]) {
          seen[i] = 1;
          frontier.push(i);
        }
    }
  }
  if (reached != I + J)
    report.violations.push_back("graph is not connected (" +
                                std::to_string(reached) + " of " +
                                std::to_string(I + J) + " nodes reachable)");
  return report;
}

ValidationReport validate_params(const NetworkTopology& topo,
                                 const LimitParams& limit) {
  ValidationReport report;
  const int I = topo.num_classes();
  const int J = topo.num_pools();
  auto check_size = [&](const char* name, Eigen::Index got, Eigen::Index want) {
    if (got != want)
      report.violations.push_back(std::string(name) + " has size " +
                                  std::to_string(got) + ", expected " +
                                  std::to_string(want));
  };
  check_size("lambda", limit.lambda.size(), I);
  check_size("gamma", limit.gamma.size(), I);
  check_size("nu", limit.nu.size(), J);
  check_size("lambda_hat", limit.lambda_hat.size(), I);
  check_size("nu_hat", limit.nu_hat.size(), J);
  if (limit.mu.rows() != I || limit.mu.cols() != J)
    report.violations.push_back("mu has wrong shape");
  if (limit.mu_hat.rows() != I || limit.mu_hat.cols() != J)
    report.violations.push_back("mu_hat has wrong shape");
  if (!report.valid()) return report;

  for (int i = 0; i < I; ++i) {
    if (limit.lambda[i] <= 0)
      report.violations.push_back("lambda of class " + std::to_string(i + 1) +
                                  " must be positive");
    if (limit.gamma[i] < 0)
      report.violations.push_back("gamma of class " + std::to_string(i + 1) +
                                  " must be nonnegative");
  }
  for (int j = 0; j < J; ++j)
    if (limit.nu[j] <= 0)
      report.violations.push_back("nu of pool " + std::to_string(j + 1) +
                                  " must be positive");
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j) {
      const bool edge = topo.has_edge(i, j);
      if (edge && limit.mu(i, j) <= 0)
        report.violations.push_back("mu of edge " + std::to_string(i + 1) + " " +
                                    std::to_string(j + 1) + " must be positive");
      if (!edge && (limit.mu(i, j) != 0 || limit.mu_hat(i, j) != 0))
        report.violations.push_back("service rate set on non-edge " +
                                    std::to_string(i + 1) + " " +
                                    std::to_string(j + 1));
    }
  if (limit.gamma.size() > 0 && limit.gamma.maxCoeff() <= 0 &&
      !limit.allow_zero_abandonment)
    report.violations.push_back(
        "all abandonment rates are zero; stability results need gamma_i > 0 "
        "for some class (set allow_zero_abandonment to force)");
  return report;
}

ScaledParams scale_params(const NetworkTopology& topo, const LimitParams& limit,
                          int n) {
  if (n < 1) throw Error(ErrorCode::ConfigError, "scale n must be >= 1");
  const int I = topo.num_classes();
  const int J = topo.num_pools();
  const double rn = std::sqrt(static_cast<double>(n));
  ScaledParams sp;
  sp.n = n;
  sp.lambda_n = n * limit.lambda + rn * limit.lambda_hat;
  sp.mu_n = limit.mu + limit.mu_hat / rn;
  sp.gamma_n = limit.gamma;
  sp.N_n = IntVec(J);
  for (int i = 0; i < I; ++i)
    if (sp.lambda_n[i] <= 0)
      throw Error(ErrorCode::NegativeRate,
                  "lambda^n of class " + std::to_string(i + 1) +
                      " is nonpositive at n = " + std::to_string(n));
  for (auto [i, j] : topo.edges())
    if (sp.mu_n(i, j) <= 0)
      throw Error(ErrorCode::NegativeRate,
                  "mu^n of edge " + std::to_string(i + 1) + " " +
                      std::to_string(j + 1) + " is nonpositive at n = " +
                      std::to_string(n));
  for (int j = 0; j < J; ++j) {
    // round-half-up of n*nu_j + sqrt(n)*nu_hat_j
    const double target = n * limit.nu[j] + rn * limit.nu_hat[j];
    sp.N_n[j] = static_cast<std::int64_t>(std::floor(target + 0.5));
    if (sp.N_n[j] < 1)
      throw Error(ErrorCode::NegativeRate,
                  "pool " + std::to_string(j + 1) + " has no servers at n = " +
                      std::to_string(n));
  }
  return sp;
}

}  // namespace hwsim
