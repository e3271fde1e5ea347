#pragma once

#include <cmath>
#include <cstdint>

#include "hwsim/types.hpp"

namespace hwsim {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Streams are keyed by (seed, stream); replications get disjoint streams
/// and identical keys reproduce identical output on any schedule.
class Philox {
 public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t seed, std::uint64_t stream)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type(0); }

  result_type operator()() {
    if (have_ == 0) refill();
    return buf_[--have_];
  }

  /// Uniform on the open interval (0,1); never returns an endpoint.
  double uniform() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1p-53;
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  double normal() {
    if (!have_normal_) {
      const double u1 = uniform();
      const double u2 = uniform();
      const double r = std::sqrt(-2.0 * std::log(u1));
      cached_normal_ = r * std::sin(6.283185307179586476925286766559 * u2);
      have_normal_ = true;
      return r * std::cos(6.283185307179586476925286766559 * u2);
    }
    have_normal_ = false;
    return cached_normal_;
  }

  /// Integer uniform on [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling avoids modulo bias.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v;
    do {
      v = (*this)();
    } while (v >= limit);
    return v % n;
  }

  /// Uniform point on the probability simplex of dimension d.
  Vec simplex(int d) {
    Vec v(d);
    double total = 0.0;
    for (int k = 0; k < d; ++k) {
      v[k] = -std::log(uniform());
      total += v[k];
    }
    return v / total;
  }

 private:
  void refill() {
    std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
    std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
    std::uint32_t c2 = static_cast<std::uint32_t>(stream_);
    std::uint32_t c3 = static_cast<std::uint32_t>(stream_ >> 32);
    std::uint32_t k0 = key0_;
    std::uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ULL * c0;
      const std::uint64_t p1 = 0xCD9E8D57ULL * c2;
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      c0 = hi1 ^ c1 ^ k0;
      c1 = lo1;
      c2 = hi0 ^ c3 ^ k1;
      c3 = lo0;
      k0 += 0x9E3779B9U;
      k1 += 0xBB67AE85U;
    }
    buf_[0] = (static_cast<std::uint64_t>(c0) << 32) | c1;
    buf_[1] = (static_cast<std::uint64_t>(c2) << 32) | c3;
    have_ = 2;
    ++counter_;
  }

  std::uint32_t key0_, key1_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::uint64_t buf_[2] = {0, 0};
  int have_ = 0;
  bool have_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace hwsim
