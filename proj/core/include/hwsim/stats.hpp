#pragma once

#include <cstdint>
#include <vector>

#include "hwsim/types.hpp"

namespace hwsim {

/// Time-averaged estimate with a batch-means 95% confidence interval.
struct ErgodicEstimate {
  double estimate = 0.0;
  double half_width = 0.0;
  int num_batches = 0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
};

/// Batch-means accumulator for one time-integrated observable.
/// Batches partition [burn_in, horizon] into equal windows; values are
/// integrated exactly between events (piecewise-constant integrands).
class BatchMeans {
 public:
  BatchMeans() = default;
  BatchMeans(double burn_in, double horizon, int num_batches);

  /// The observable held value `v` over [t, t+dt).
  void add(double t, double dt, double v);

  double time_average() const;
  ErgodicEstimate estimate(std::uint64_t seed) const;
  const std::vector<double>& batch_totals() const { return totals_; }
  std::vector<double> batch_averages() const;
  double batch_width() const { return width_; }

 private:
  double burn_in_ = 0.0;
  double horizon_ = 0.0;
  double width_ = 0.0;
  std::vector<double> totals_;
};

/// 95% estimate from independent batch/replication means.
ErgodicEstimate pooled_estimate(const std::vector<double>& batch_means,
                                double horizon, std::uint64_t seed);

double student_t_975(int dof);

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Largest-remainder integer apportionment of `total` by `weights`;
/// ties broken by lowest index.
std::vector<std::int64_t> largest_remainder(const std::vector<double>& weights,
                                            std::int64_t total);

/// FNV-1a 64-bit hash, used for config fingerprints.
std::uint64_t fnv1a(const std::string& data);

}  // namespace hwsim
