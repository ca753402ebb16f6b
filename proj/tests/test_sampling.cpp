#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "actreg/lipschitz.hpp"
#include "actreg/rng.hpp"
#include "actreg/sampling.hpp"

using namespace actreg;

namespace {
Matrix random_matrix(Index n, Index d, std::uint64_t seed) {
  CounterRng rng = CounterRng::keyed(seed, 0);
  Matrix A(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) A(i, j) = rng.normal();
  return A;
}

double split_objective(const SplitProblem& sp, const Vector& b, const LipschitzFn& f,
                       const Vector& x, double p) {
  Vector u = sp.A_split * x;
  double s = 0.0;
  for (Index j = 0; j < sp.n_prime; ++j)
    s += pow_abs(sp.lambda[j] * (f.eval(u[j]) - b[sp.origin[std::size_t(j)]]), p);
  return s;
}
}  // namespace

TEST_CASE("split counts for a dominant row") {
  // single column (10, 1, ..., 1) with n = 12: the closed-form weight of the
  // big row is 10^p / (10^p + 11)
  Vector a(12);
  a.setOnes();
  a[0] = 10.0;
  Matrix A = a;
  struct Case {
    double p;
    long k1;
  };
  for (Case c : {Case{1.0, 6}, Case{2.0, 11}}) {
    LewisWeights lw = compute_lewis_weights(A, c.p);
    std::vector<long> k = split_counts(lw.w, 12, 1);
    CHECK(k[0] == c.k1);
    for (std::size_t i = 1; i < k.size(); ++i) CHECK(k[i] == 1);
  }
}

TEST_CASE("uniform weights split into nothing") {
  Matrix A = Matrix::Identity(4, 4);
  LewisWeights lw = compute_lewis_weights(A, 2.0);
  SplitProblem sp = row_split(A, lw, 2.0);
  CHECK(sp.n_prime == 4);
  for (Index j = 0; j < 4; ++j) {
    CHECK(sp.lambda[j] == 1.0);
    CHECK(sp.origin[std::size_t(j)] == j);
  }
  CHECK(sp.A_split == A);
}

TEST_CASE("row split preserves every objective and bounds the weights") {
  CounterRng rng = CounterRng::keyed(71, 0);
  for (int rep = 0; rep < 25; ++rep) {
    double p = (rep % 4 == 0) ? 1.0 : (rep % 4 == 1) ? 1.5 : (rep % 4 == 2) ? 2.0 : 3.0;
    LipschitzFn f = (rep % 3 == 0)   ? LipschitzFn::identity()
                    : (rep % 3 == 1) ? LipschitzFn::relu()
                                     : LipschitzFn::clip01_ramp();
    Index n = 20 + Index(rng.uniform() * 20), d = 2 + Index(rng.uniform() * 3);
    Matrix A = random_matrix(n, d, 73 + std::uint64_t(rep));
    A.row(0) *= 8.0;  // force nontrivial splitting
    Vector b(n);
    for (Index i = 0; i < n; ++i) b[i] = rng.normal();
    LewisWeights lw = compute_lewis_weights(A, p);
    SplitProblem sp = row_split(A, lw, p);

    CHECK(sp.n_prime <= 2 * n);
    for (int t = 0; t < 4; ++t) {
      Vector x(d);
      for (Index j = 0; j < d; ++j) x[j] = 2.0 * rng.normal();
      double direct = lp_pow(Vector(f.eval_vec(A * x) - b), p);
      double split = split_objective(sp, b, f, x, p);
      CHECK(split == Catch::Approx(direct).margin(1e-9 * (1.0 + direct)));
    }

    Matrix LA = sp.lambda.asDiagonal() * sp.A_split;
    LewisWeights lw2 = compute_lewis_weights(LA, p);
    CHECK(lw2.w.maxCoeff() <= double(d) / double(n) + 1e-9);
  }
}

TEST_CASE("full-rate sampling keeps every row at unit scale") {
  std::vector<long> k = {1, 3, 2, 5};
  SamplingMatrix S = gsm(k, 1.0, 2.0, 99);
  CHECK(S.query_count == 4);
  for (const auto& [row, scale] : S.entries) CHECK(scale == 1.0);
}

TEST_CASE("sampler rate validation") {
  std::vector<long> k = {1, 1};
  CHECK_THROWS_AS(gsm(k, 0.0, 2.0, 1), InvalidRate);
  CHECK_THROWS_AS(gsm(k, -0.2, 2.0, 1), InvalidRate);
  CHECK_THROWS_AS(gsm(k, 1.5, 2.0, 1), InvalidRate);
  CHECK_THROWS_AS(gsm(k, 0.5, 0.5, 1), InvalidInput);
}

TEST_CASE("query count concentrates at the sampling rate") {
  std::vector<long> k(10000, 1);
  SamplingMatrix S = gsm(k, 0.3, 2.0, 1234);
  double frac = double(S.query_count) / 10000.0;
  CHECK(frac > 0.285);
  CHECK(frac < 0.315);
}

TEST_CASE("stored scales encode realized binomial draws") {
  std::vector<long> k = {4, 9, 16, 25, 2, 7};
  for (double p : {1.0, 2.0, 3.0}) {
    SamplingMatrix S = gsm(k, 0.6, p, 555);
    for (const auto& [row, scale] : S.entries) {
      long ki = k[std::size_t(row)];
      double N = std::pow(scale, p) * 0.6 * double(ki);
      long Ni = std::lround(N);
      CHECK(std::fabs(N - double(Ni)) < 1e-9);
      CHECK(Ni >= 1);
      CHECK(Ni <= ki);
    }
  }
}

TEST_CASE("sampling is unbiased for p-th powers") {
  Vector v(5);
  v << 1.0, -2.0, 0.5, 3.0, -1.5;
  std::vector<long> k = {3, 1, 4, 1, 5};
  const int T = 10000;
  for (double p : {1.0, 2.0, 3.0}) {
    double target = lp_pow(v, p);
    double sum = 0.0, sumsq = 0.0;
    for (int t = 0; t < T; ++t) {
      SamplingMatrix S = gsm(k, 0.35, p, 10000 + std::uint64_t(t));
      double s = 0.0;
      for (const auto& [row, scale] : S.entries) s += pow_abs(scale * v[row], p);
      sum += s;
      sumsq += s * s;
    }
    double mean = sum / T;
    double sd = std::sqrt(std::max(sumsq / T - mean * mean, 0.0));
    CHECK(std::fabs(mean - target) <= 3.0 * sd / std::sqrt(double(T)));
  }
}

TEST_CASE("embedding rate formulas at pinned points") {
  CHECK(embedding_rate(2.0, 4, 0.5) == Catch::Approx(4.0 * std::log(8.0)).epsilon(1e-12));
  CHECK(embedding_rate(1.0, 4, 0.5) == Catch::Approx(4.0 * std::log(8.0)).epsilon(1e-12));
  double expected3 = std::pow(4.0, 0.5) * 4.0 * std::pow(std::log(4.0), 2.0) * std::log(8.0);
  CHECK(embedding_rate(3.0, 4, 0.5) == Catch::Approx(expected3).epsilon(1e-12));
  // between 1 and 2 the rate picks up an iterated-log factor
  CHECK(embedding_rate(1.5, 4, 0.5) >= embedding_rate(2.0, 4, 0.5));
  // finite and positive as eps approaches 1, where the floored logs kick in
  CHECK(embedding_rate(2.0, 4, 1.0) > 0.0);
  CHECK(std::isfinite(embedding_rate(2.0, 4, 1.0)));
  CHECK(embedding_rate(2.0, 1, 1.0) == Catch::Approx(1.0));  // both factors floored
  CHECK_THROWS_AS(embedding_rate(0.9, 4, 0.5), InvalidInput);
  CHECK_THROWS_AS(embedding_rate(2.0, 0, 0.5), InvalidInput);
  CHECK_THROWS_AS(embedding_rate(2.0, 4, 0.0), InvalidInput);
  CHECK_THROWS_AS(embedding_rate(2.0, 4, 0.5, -1.0), InvalidInput);
}

TEST_CASE("saturated keep probabilities give the identity") {
  Matrix A = random_matrix(10, 2, 81);
  LewisWeights lw = compute_lewis_weights(A, 2.0);
  SamplingMatrix S = sample_for_embedding(A, lw, 2.0, 0.5, 7, 1e6);
  CHECK(S.query_count == 10);
  for (const auto& [row, scale] : S.entries) CHECK(scale == Catch::Approx(1.0));
  CHECK(S.alpha == Catch::Approx(1.0));
}

TEST_CASE("embedding sample size concentrates at its expectation") {
  Matrix A = random_matrix(300, 4, 83);
  LewisWeights lw = compute_lewis_weights(A, 2.0);
  double beta = embedding_rate(2.0, 4, 0.5, 2.0);
  double expect = 0.0, var = 0.0;
  for (Index i = 0; i < 300; ++i) {
    double pi = std::min(beta * lw.w[i], 1.0);
    expect += pi;
    var += pi * (1.0 - pi);
  }
  const int T = 200;
  double sum = 0.0;
  for (int t = 0; t < T; ++t)
    sum += double(sample_for_embedding(A, lw, 2.0, 0.5, 9000 + std::uint64_t(t), 2.0).query_count);
  double mean = sum / T;
  CHECK(std::fabs(mean - expect) <= 3.0 * std::sqrt(var / double(T)) + 1e-9);
}
