#pragma once

#include <cmath>
#include <cstdint>

namespace actreg {

// splitmix64 finalizer; bijective on 64-bit words
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return mix64(seed ^ (mix64(v) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

// Counter-based stream: state advances by a fixed odd constant, output is the
// splitmix64 finalizer of the state.  Streams keyed by hash_combine(seed, id)
// are reproducible independent of the order rows are visited in.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : state_(key) {}

  static CounterRng keyed(std::uint64_t seed, std::uint64_t id) {
    return CounterRng(hash_combine(seed, id));
  }
  static CounterRng keyed(std::uint64_t seed, std::uint64_t id1, std::uint64_t id2) {
    return CounterRng(hash_combine(hash_combine(seed, id1), id2));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // uniform on [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on (0, 1]; safe under log()
  double uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // standard normal via Box-Muller; consumes two uniforms
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // exact Binomial(k, alpha) draw; no normal approximation anywhere.
  // Inversion by sequential pmf search for small k or small tail mass,
  // transformed rejection with squeeze for the large case.
  long binomial(long k, double alpha) {
    if (k <= 0 || alpha <= 0.0) return 0;
    if (alpha >= 1.0) return k;
    if (alpha > 0.5) return k - binomial_small_p(k, 1.0 - alpha);
    return binomial_small_p(k, alpha);
  }

 private:
  std::uint64_t state_;

  long binomial_small_p(long k, double p) {
    if (k <= 64 || double(k) * p <= 10.0) return binomial_inversion(k, p);
    return binomial_btrs(k, p);
  }

  // sequential search through the cdf using the pmf recurrence
  long binomial_inversion(long k, double p) {
    double q = 1.0 - p;
    double r = p / q;
    double pmf = std::pow(q, double(k));
    double cdf = pmf;
    double u = uniform();
    long j = 0;
    while (u > cdf && j < k) {
      pmf *= r * double(k - j) / double(j + 1);
      cdf += pmf;
      ++j;
    }
    return j;
  }

  // transformed rejection with squeeze; exact for k*p >= 10, p <= 1/2
  long binomial_btrs(long k, double p) {
    const double n = double(k);
    const double spq = std::sqrt(n * p * (1.0 - p));
    const double b = 1.15 + 2.53 * spq;
    const double a = -0.0873 + 0.0248 * b + 0.01 * p;
    const double c = n * p + 0.5;
    const double vr = 0.92 - 4.2 / b;
    const double alpha = (2.83 + 5.1 / b) * spq;
    const double lpq = std::log(p / (1.0 - p));
    const long m = long(std::floor((n + 1.0) * p));
    const double h = std::lgamma(double(m) + 1.0) + std::lgamma(n - double(m) + 1.0);
    for (;;) {
      double u = uniform() - 0.5;
      double v = uniform_pos();
      double us = 0.5 - std::fabs(u);
      long j = long(std::floor((2.0 * a / us + b) * u + c));
      if (j < 0 || j > k) continue;
      if (us >= 0.07 && v <= vr) return j;
      v = std::log(v * alpha / (a / (us * us) + b));
      if (v <= h - std::lgamma(double(j) + 1.0) - std::lgamma(n - double(j) + 1.0) +
                   (double(j) - double(m)) * lpq)
        return j;
    }
  }
};

}  // namespace actreg
