#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hwsim/types.hpp"

namespace hwsim {

/// Bipartite compatibility graph of I customer classes and J server pools.
/// Valid networks are trees: connected with |E| = I + J - 1.
class NetworkTopology {
 public:
  NetworkTopology(int num_classes, int num_pools,
                  std::vector<std::pair<int, int>> edges);

  int num_classes() const { return num_classes_; }
  int num_pools() const { return num_pools_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }

  bool has_edge(int i, int j) const { return edge_index_[idx(i, j)] >= 0; }
  /// Position of edge (i,j) in edges(), or -1.
  int edge_id(int i, int j) const { return edge_index_[idx(i, j)]; }

  const std::vector<int>& pools_of(int i) const { return pools_of_[i]; }
  const std::vector<int>& classes_of(int j) const { return classes_of_[j]; }

  /// Pools of class i ordered by tree peeling round (leaf pools first).
  const std::vector<int>& pool_fill_order(int i) const {
    return pool_fill_order_[i];
  }

  /// Round at which each node is removed when leaves are peeled repeatedly.
  /// Classes occupy [0, I), pools [I, I+J).
  const std::vector<int>& peel_round() const { return peel_round_; }

 private:
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * num_pools_ + j;
  }
  void build_adjacency();

  int num_classes_;
  int num_pools_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<int> edge_index_;
  std::vector<std::vector<int>> pools_of_;
  std::vector<std::vector<int>> classes_of_;
  std::vector<std::vector<int>> pool_fill_order_;
  std::vector<int> peel_round_;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool valid() const { return violations.empty(); }
};

ValidationReport validate_topology(const NetworkTopology& topo);

/// First- and second-order parameters of the Halfin-Whitt scaling.
struct LimitParams {
  Vec lambda;      // per-class arrival rates, > 0
  Mat mu;          // per-edge service rates, > 0 on edges, 0 off
  Vec gamma;       // per-class abandonment rates, >= 0
  Vec nu;          // per-pool capacity fractions, > 0
  Vec lambda_hat;  // second-order arrival coefficients
  Mat mu_hat;      // second-order service coefficients (0 off edges)
  Vec nu_hat;      // second-order pool-size coefficients
  bool allow_zero_abandonment = false;  // exploratory override
};

ValidationReport validate_params(const NetworkTopology& topo,
                                 const LimitParams& limit);

/// Parameters of the n-th system.
struct ScaledParams {
  int n = 0;
  Vec lambda_n;  // lambda_i^n = n*lambda_i + sqrt(n)*lambda_hat_i
  Mat mu_n;      // mu_ij^n = mu_ij + mu_hat_ij / sqrt(n)
  Vec gamma_n;   // gamma_i^n = gamma_i
  IntVec N_n;    // N_j^n = round(n*nu_j + sqrt(n)*nu_hat_j), >= 1
};

ScaledParams scale_params(const NetworkTopology& topo, const LimitParams& limit,
                          int n);

}  // namespace hwsim
