#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "actreg/common.hpp"
#include "actreg/lewis.hpp"
#include "actreg/rng.hpp"

namespace actreg {

// Diagonal sampling operator stored sparsely as sorted (row, scale) pairs.
struct SamplingMatrix {
  Index n = 0;                                    // ambient row count
  std::vector<std::pair<Index, double>> entries;  // scale > 0, sorted by row
  double alpha = 1.0;                             // sampling rate used
  Index query_count = 0;                          // == entries.size()
};

// Per-row copy counts for splitting; k_i = max(1, ceil(n w_i / d)) so every
// row keeps at least one copy and the per-copy weight w_i / k_i is <= d / n.
inline std::vector<long> split_counts(const Vector& w, Index n, Index d) {
  std::vector<long> k(std::size_t(n), 1);
  for (Index i = 0; i < n; ++i) {
    double t = double(n) * w[i] / double(d);
    k[std::size_t(i)] = std::max(1L, long(std::ceil(t)));
  }
  return k;
}

// Algorithm: draw N_i ~ Bin(k_i, alpha) per row; keep rows with N_i > 0 at
// scale (N_i / (alpha k_i))^(1/p), so E[S_ii^p] = 1 for every kept row.
inline SamplingMatrix gsm(const std::vector<long>& k, double alpha, double p,
                          std::uint64_t seed) {
  if (!(alpha > 0.0) || alpha > 1.0) throw InvalidRate("gsm: alpha must lie in (0, 1]");
  if (p < 1.0) throw InvalidInput("gsm: p must be >= 1");
  SamplingMatrix S;
  S.n = Index(k.size());
  S.alpha = alpha;
  for (Index i = 0; i < S.n; ++i) {
    long ki = k[std::size_t(i)];
    if (ki <= 0) continue;
    long N = (alpha == 1.0) ? ki : CounterRng::keyed(seed, std::uint64_t(i)).binomial(ki, alpha);
    if (N > 0)
      S.entries.emplace_back(i, std::pow(double(N) / (alpha * double(ki)), 1.0 / p));
  }
  S.query_count = Index(S.entries.size());
  return S;
}

// Row-splitting of (A, b): row i appears k_i times with scale k_i^(-1/p), so
// the weighted objective is preserved exactly and the split weights are flat.
// b is never copied; origin[j] is the original index backing split row j.
struct SplitProblem {
  Matrix A_split;              // n' x d
  std::vector<Index> origin;   // split row -> original row
  Vector lambda;               // n' scales k_i^(-1/p)
  std::vector<long> k;         // per original row
  Index n_prime = 0;
};

inline SplitProblem row_split(const Matrix& A, const LewisWeights& lw, double p) {
  const Index n = A.rows(), d = A.cols();
  SplitProblem sp;
  sp.k = split_counts(lw.w, n, d);
  long total = 0;
  for (long ki : sp.k) total += ki;
  sp.n_prime = Index(total);
  sp.A_split.resize(sp.n_prime, d);
  sp.lambda.resize(sp.n_prime);
  sp.origin.reserve(std::size_t(sp.n_prime));
  Index j = 0;
  for (Index i = 0; i < n; ++i) {
    double scale = std::pow(double(sp.k[std::size_t(i)]), -1.0 / p);
    for (long c = 0; c < sp.k[std::size_t(i)]; ++c, ++j) {
      sp.A_split.row(j) = A.row(i);
      sp.lambda[j] = scale;
      sp.origin.push_back(i);
    }
  }
  return sp;
}

namespace detail {
// log factors floored at 1 so the rate stays positive down to d = 1, eps -> 1
inline double lg1(double x) { return std::max(std::log(x), 1.0); }
}  // namespace detail

// Oversampling rate beta for an lp subspace embedding via Lewis-weight
// sampling; three regimes of p, constants absorbed into c_emb.
inline double embedding_rate(double p, Index d, double eps, double c_emb = 1.0) {
  if (p < 1.0 || d < 1 || !(eps > 0.0) || eps > 1.0 || !(c_emb > 0.0))
    throw InvalidInput("embedding_rate: need p >= 1, d >= 1, eps in (0, 1], c_emb > 0");
  const double de = double(d) / eps;
  const double inv_eps2 = 1.0 / (eps * eps);
  if (p > 2.0)
    return c_emb * std::pow(double(d), p / 2.0 - 1.0) * inv_eps2 *
           detail::lg1(double(d)) * detail::lg1(double(d)) * detail::lg1(de);
  if (p == 1.0 || p == 2.0) return c_emb * inv_eps2 * detail::lg1(de);
  const double ll = std::max(std::log(detail::lg1(de)), 1.0);
  return c_emb * inv_eps2 * detail::lg1(de) * ll * ll;
}

// Independent per-row Bernoulli sampling at p_i = min(beta w_i, 1) with scale
// p_i^(-1/p); alpha records the average keep probability.
inline SamplingMatrix sample_for_embedding(const Matrix& A, const LewisWeights& lw, double p,
                                           double eps, std::uint64_t seed, double c_emb = 1.0) {
  const double beta = embedding_rate(p, A.cols(), eps, c_emb);
  SamplingMatrix S;
  S.n = A.rows();
  double sum_p = 0.0;
  for (Index i = 0; i < S.n; ++i) {
    double pi = std::min(beta * std::max(lw.w[i], 0.0), 1.0);
    sum_p += pi;
    if (pi <= 0.0) continue;
    if (pi >= 1.0 || CounterRng::keyed(seed, std::uint64_t(i)).uniform() < pi)
      S.entries.emplace_back(i, std::pow(pi, -1.0 / p));
  }
  S.alpha = S.n > 0 ? std::min(sum_p / double(S.n), 1.0) : 1.0;
  S.query_count = Index(S.entries.size());
  return S;
}

}  // namespace actreg
