#include "hwsim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hwsim {

BatchMeans::BatchMeans(double burn_in, double horizon, int num_batches)
    : burn_in_(burn_in),
      horizon_(horizon),
      width_((horizon - burn_in) / num_batches),
      totals_(static_cast<std::size_t>(num_batches), 0.0) {}

void BatchMeans::add(double t, double dt, double v) {
  double lo = std::max(t, burn_in_);
  double hi = std::min(t + dt, horizon_);
  while (lo < hi) {
    auto idx = static_cast<std::size_t>((lo - burn_in_) / width_);
    if (idx >= totals_.size()) idx = totals_.size() - 1;
    const double edge = burn_in_ + (idx + 1) * width_;
    const double seg = std::min(hi, edge) - lo;
    totals_[idx] += v * seg;
    lo += seg;
    if (seg <= 0.0) break;  // guards a degenerate zero-width segment
  }
}

double BatchMeans::time_average() const {
  const double total = std::accumulate(totals_.begin(), totals_.end(), 0.0);
  return total / (horizon_ - burn_in_);
}

std::vector<double> BatchMeans::batch_averages() const {
  std::vector<double> means(totals_.size());
  for (std::size_t k = 0; k < totals_.size(); ++k) means[k] = totals_[k] / width_;
  return means;
}

ErgodicEstimate BatchMeans::estimate(std::uint64_t seed) const {
  return pooled_estimate(batch_averages(), horizon_, seed);
}

ErgodicEstimate pooled_estimate(const std::vector<double>& batch_means,
                                double horizon, std::uint64_t seed) {
  ErgodicEstimate est;
  est.num_batches = static_cast<int>(batch_means.size());
  est.horizon = horizon;
  est.seed = seed;
  if (batch_means.empty()) return est;
  const double n = static_cast<double>(batch_means.size());
  const double mean =
      std::accumulate(batch_means.begin(), batch_means.end(), 0.0) / n;
  est.estimate = mean;
  if (batch_means.size() < 2) return est;
  double ss = 0.0;
  for (double m : batch_means) ss += (m - mean) * (m - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  est.half_width = student_t_975(est.num_batches - 1) * sd / std::sqrt(n);
  return est;
}

namespace {

// Continued-fraction evaluation of the incomplete beta (Lentz's method).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_975(int dof) {
  if (dof < 1) return 0.0;
  const double nu = dof;
  // P(T <= t) = 1 - I_{nu/(nu+t^2)}(nu/2, 1/2) / 2 for t >= 0.
  auto cdf = [nu](double t) {
    return 1.0 - 0.5 * incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
  };
  double lo = 0.0, hi = 700.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < 0.975)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit fit;
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return fit;
  const double nn = static_cast<double>(n);
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / nn;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / nn;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx <= 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;  // average rank over the tie run
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return 0.0;
  const std::vector<double> rx = ranks(x);
  const std::vector<double> ry = ranks(y);
  const LinearFit fit = fit_line(rx, ry);
  const double sign = fit.slope >= 0 ? 1.0 : -1.0;
  return sign * std::sqrt(std::max(0.0, fit.r_squared));
}

std::vector<std::int64_t> largest_remainder(const std::vector<double>& weights,
                                            std::int64_t total) {
  const std::size_t d = weights.size();
  std::vector<std::int64_t> out(d, 0);
  double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (wsum <= 0.0 || total <= 0) return out;
  std::vector<double> frac(d);
  std::int64_t assigned = 0;
  for (std::size_t k = 0; k < d; ++k) {
    const double share = weights[k] / wsum * static_cast<double>(total);
    out[k] = static_cast<std::int64_t>(std::floor(share));
    frac[k] = share - static_cast<double>(out[k]);
    assigned += out[k];
  }
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return frac[a] > frac[b];
  });
  for (std::size_t k = 0; assigned < total; ++k) {
    ++out[order[k % d]];
    ++assigned;
  }
  return out;
}

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hwsim
