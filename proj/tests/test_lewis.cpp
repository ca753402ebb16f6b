#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "actreg/lewis.hpp"
#include "actreg/rng.hpp"

using namespace actreg;

namespace {
Matrix random_matrix(Index n, Index d, std::uint64_t seed) {
  CounterRng rng = CounterRng::keyed(seed, 0);
  Matrix A(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) A(i, j) = rng.normal();
  return A;
}
}  // namespace

TEST_CASE("identity matrix gets unit weights") {
  for (double p : {1.0, 2.0, 3.0}) {
    Matrix A = Matrix::Identity(4, 4);
    LewisWeights lw = compute_lewis_weights(A, p);
    CHECK(lw.converged);
    for (Index i = 0; i < 4; ++i) CHECK(lw.w[i] == Catch::Approx(1.0).margin(1e-8));
  }
}

TEST_CASE("single column closed form") {
  Vector a(4);
  a << 2.0, -3.0, 5.0, 1.0;
  Matrix A = a;
  for (double p : {1.0, 1.5, 2.0, 3.0}) {
    LewisWeights lw = compute_lewis_weights(A, p);
    double denom = 0.0;
    for (Index i = 0; i < 4; ++i) denom += std::pow(std::fabs(a[i]), p);
    for (Index i = 0; i < 4; ++i)
      CHECK(lw.w[i] == Catch::Approx(std::pow(std::fabs(a[i]), p) / denom).margin(1e-6));
    // substitute back into the defining relation as an independent check
    double gram = 0.0;
    for (Index i = 0; i < 4; ++i) gram += std::pow(lw.w[i], 1.0 - 2.0 / p) * a[i] * a[i];
    for (Index i = 0; i < 4; ++i)
      CHECK(lw.w[i] == Catch::Approx(std::pow(a[i] * a[i] / gram, p / 2.0)).margin(1e-6));
  }
}

TEST_CASE("weights sum to the column count") {
  Matrix A = random_matrix(50, 4, 7);
  for (double p : {1.0, 1.5, 2.0, 3.0, 4.0}) {
    LewisWeights lw = compute_lewis_weights(A, p);
    CHECK(lw.w.sum() == Catch::Approx(4.0).margin(1e-6 * 4.0));
    CHECK(lw.w.minCoeff() >= 0.0);
  }
}

TEST_CASE("p=2 weights equal leverage scores") {
  Matrix A = random_matrix(30, 5, 11);
  LewisWeights lw = compute_lewis_weights(A, 2.0);
  Matrix G = (A.transpose() * A).inverse();
  for (Index i = 0; i < 30; ++i) {
    double lev = A.row(i) * G * A.row(i).transpose();
    CHECK(lw.w[i] == Catch::Approx(lev).margin(1e-8));
  }
}

TEST_CASE("weights are scale invariant") {
  Matrix A = random_matrix(40, 3, 13);
  for (double p : {1.0, 2.0, 3.0}) {
    LewisWeights lw1 = compute_lewis_weights(A, p);
    LewisWeights lw2 = compute_lewis_weights(Matrix(3.0 * A), p);
    for (Index i = 0; i < 40; ++i) CHECK(lw1.w[i] == Catch::Approx(lw2.w[i]).margin(2e-8));
  }
}

TEST_CASE("zero rows carry exactly zero weight") {
  Matrix A = random_matrix(20, 3, 17);
  A.row(4).setZero();
  A.row(11).setZero();
  LewisWeights lw = compute_lewis_weights(A, 1.5);
  CHECK(lw.w[4] == 0.0);
  CHECK(lw.w[11] == 0.0);
  CHECK(lw.w.sum() == Catch::Approx(3.0).margin(1e-6 * 3.0));
}

TEST_CASE("fixed point residual is tight after convergence") {
  for (double p : {1.0, 1.5, 2.0, 3.0, 4.0, 5.0}) {
    Matrix A = random_matrix(60, 4, 19 + std::uint64_t(p * 10));
    LewisWeights lw = compute_lewis_weights(A, p, 1e-8);
    CHECK(lw.converged);
    CHECK(lw.residual <= 1e-7);
  }
}

TEST_CASE("unconverged runs still report the last iterate") {
  Matrix A = random_matrix(50, 4, 23);
  LewisWeights lw = compute_lewis_weights(A, 4.0, 1e-14, 2);
  CHECK_FALSE(lw.converged);
  CHECK(lw.w.size() == 50);
  CHECK(lw.w.sum() > 0.0);
}

TEST_CASE("input validation") {
  Matrix A = random_matrix(10, 3, 29);
  CHECK_THROWS_AS(compute_lewis_weights(A, 0.5), InvalidInput);
  CHECK_THROWS_AS(compute_lewis_weights(A, 2.0, 0.0), InvalidInput);
  Matrix bad = A;
  bad(2, 1) = std::nan("");
  CHECK_THROWS_AS(compute_lewis_weights(bad, 2.0), InvalidInput);
  Matrix wide = random_matrix(2, 3, 31);
  CHECK_THROWS_AS(compute_lewis_weights(wide, 2.0), RankDeficient);
  Matrix dup(6, 2);
  dup.col(0) = random_matrix(6, 1, 37);
  dup.col(1) = 2.0 * dup.col(0);
  CHECK_THROWS_AS(compute_lewis_weights(dup, 2.0), RankDeficient);
}

TEST_CASE("coordinate bound on basis vectors and random colspace vectors") {
  Matrix I3 = Matrix::Identity(3, 3);
  LewisWeights lwi = compute_lewis_weights(I3, 2.0);
  Vector e1 = Vector::Zero(3);
  e1[0] = 1.0;
  CHECK(coordinate_bound_check(I3, lwi, e1, 2.0));

  Matrix A = random_matrix(30, 3, 41);
  for (double p : {1.0, 2.0, 3.0}) {
    LewisWeights lw = compute_lewis_weights(A, p);
    CounterRng rng = CounterRng::keyed(43, std::uint64_t(p));
    for (int t = 0; t < 10; ++t) {
      Vector x(3);
      for (Index j = 0; j < 3; ++j) x[j] = rng.normal();
      CHECK(coordinate_bound_check(A, lw, Vector(A * x), p));
    }
  }
}

TEST_CASE("coordinate bound rejects vectors outside the column space") {
  Matrix A = random_matrix(12, 2, 47);
  LewisWeights lw = compute_lewis_weights(A, 2.0);
  Eigen::HouseholderQR<Matrix> qr(A);
  Matrix Q = qr.householderQ() * Matrix::Identity(12, 2);
  Vector v = random_matrix(12, 1, 53);
  Vector off = v - Q * (Q.transpose() * v);  // orthogonal residual
  REQUIRE(off.norm() > 1e-3);
  CHECK_THROWS_AS(coordinate_bound_check(A, lw, off, 2.0), InvalidInput);
  CHECK_THROWS_AS(coordinate_bound_check(A, lw, Vector(Vector::Zero(5)), 2.0), InvalidInput);
}

TEST_CASE("full sampling reproduces the input weight bound") {
  Matrix A = random_matrix(25, 3, 59);
  LewisWeights lw = compute_lewis_weights(A, 2.0);
  std::vector<std::pair<Index, double>> all;
  for (Index i = 0; i < 25; ++i) all.emplace_back(i, 1.0);
  WeightBoundReport rep = sampled_weight_bound(A, all, 2.0);
  CHECK(rep.m == 25);
  CHECK(rep.max_weight == Catch::Approx(lw.w.maxCoeff()).margin(1e-7));
}

TEST_CASE("sampled weight bound flags rank loss") {
  Matrix A = random_matrix(25, 3, 61);
  std::vector<std::pair<Index, double>> few = {{0, 1.0}, {1, 1.0}};
  CHECK_THROWS_AS(sampled_weight_bound(A, few, 2.0), RankDeficient);
  // three copies of one row span a single direction
  std::vector<std::pair<Index, double>> degenerate = {{5, 1.0}, {5, 1.0}, {5, 1.0}};
  CHECK_THROWS_AS(sampled_weight_bound(A, degenerate, 2.0), RankDeficient);
}
