#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "actreg/common.hpp"

namespace actreg {

struct LewisWeights {
  Vector w;         // one weight per row; zero rows get exactly 0
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;  // max_i |w_i - update_i| at exit
};

namespace detail {

// eigendecomposition-backed pseudo-inverse pieces for the d x d Gram matrix;
// eigenvalues below cutoff * max are treated as zero
inline Matrix half_pinv_factor(const Matrix& M, double cutoff = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  if (es.info() != Eigen::Success) throw NumericalFailure("eigensolver failed on Gram matrix");
  Vector lam = es.eigenvalues();
  double lmax = lam.cwiseAbs().maxCoeff();
  Vector inv_sqrt(lam.size());
  for (Index j = 0; j < lam.size(); ++j)
    inv_sqrt[j] = (lam[j] > cutoff * lmax && lam[j] > 0.0) ? 1.0 / std::sqrt(lam[j]) : 0.0;
  return es.eigenvectors() * inv_sqrt.asDiagonal();
}

inline Index numeric_rank(const Matrix& A, double cutoff = 1e-12) {
  Eigen::BDCSVD<Matrix> svd(A);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  double smax = sv[0];
  Index r = 0;
  for (Index j = 0; j < sv.size(); ++j)
    if (sv[j] > cutoff * smax) ++r;
  return r;
}

}  // namespace detail

// Fixed-point iteration for the row weights satisfying
// w_i = (a_i^T (A^T W^{1-2/p} A)^+ a_i)^{p/2}, started from the uniform d/n.
// Plain iteration below p = 4, geometric damping with eta = 1/2 at and above.
// max_iter = 0 selects the default cap (200 plain, 500 damped).
inline LewisWeights compute_lewis_weights(const Matrix& A, double p, double tol = 1e-8,
                                          int max_iter = 0) {
  const Index n = A.rows(), d = A.cols();
  if (p < 1.0) throw InvalidInput("compute_lewis_weights: p must be >= 1");
  if (!(tol > 0.0)) throw InvalidInput("compute_lewis_weights: tol must be positive");
  if (!A.allFinite()) throw InvalidInput("compute_lewis_weights: A has non-finite entries");
  if (n < d || detail::numeric_rank(A) < d)
    throw RankDeficient("compute_lewis_weights: column rank below d");

  const bool damped = p >= 4.0;
  if (max_iter <= 0) max_iter = damped ? 500 : 200;
  const double e = 1.0 - 2.0 / p;

  std::vector<Index> live;  // rows with nonzero norm
  live.reserve(n);
  for (Index i = 0; i < n; ++i)
    if (A.row(i).norm() > 0.0) live.push_back(i);

  Vector w = Vector::Zero(n);
  for (Index i : live) w[i] = double(d) / double(n);

  auto update = [&](const Vector& cur) {
    Matrix M = Matrix::Zero(d, d);
    for (Index i : live) M.noalias() += std::pow(cur[i], e) * A.row(i).transpose() * A.row(i);
    Matrix F = detail::half_pinv_factor(M);
    Vector next = Vector::Zero(n);
    for (Index i : live) {
      double s = (A.row(i) * F).squaredNorm();
      next[i] = std::max(std::pow(s, p / 2.0), 1e-300);
    }
    return next;
  };

  LewisWeights out;
  for (out.iterations = 1; out.iterations <= max_iter; ++out.iterations) {
    Vector u = update(w);
    Vector next(n);
    if (damped) {
      next = Vector::Zero(n);
      for (Index i : live) next[i] = std::sqrt(w[i] * u[i]);
    } else {
      next = u;
    }
    double diff = 0.0;
    for (Index i : live) diff = std::max(diff, std::fabs(next[i] - w[i]));
    w = next;
    if (diff <= tol) {
      out.converged = true;
      break;
    }
  }
  if (out.iterations > max_iter) out.iterations = max_iter;

  Vector u = update(w);
  double resid = 0.0;
  for (Index i : live) resid = std::max(resid, std::fabs(u[i] - w[i]));
  out.residual = resid;
  out.w = std::move(w);
  return out;
}

// Checks |u_i| <= d^(1/2 - 1/max(2,p)) * w_i^(1/p) * ||u||_p for every row.
// u must lie in the column space of A.
inline bool coordinate_bound_check(const Matrix& A, const LewisWeights& lw, const Vector& u,
                                   double p) {
  if (u.size() != A.rows()) throw InvalidInput("coordinate_bound_check: size mismatch");
  Eigen::HouseholderQR<Matrix> qr(A);
  Matrix Q = qr.householderQ() * Matrix::Identity(A.rows(), A.cols());
  Vector proj = Q * (Q.transpose() * u);
  if ((u - proj).norm() > 1e-8 * std::max(1.0, u.norm()))
    throw InvalidInput("coordinate_bound_check: u not in the column space of A");

  const double unorm = lp_norm(u, p);
  const double dim_factor = std::pow(double(A.cols()), 0.5 - 1.0 / std::max(2.0, p));
  const double slack = 1e-7 * std::max(1.0, unorm);
  for (Index i = 0; i < u.size(); ++i) {
    double rhs = dim_factor * std::pow(std::max(lw.w[i], 0.0), 1.0 / p) * unorm;
    if (std::fabs(u[i]) > rhs + slack) return false;
  }
  return true;
}

struct WeightBoundReport {
  double max_weight = 0.0;
  Index m = 0;  // rows surviving the sampling
};

// Lewis weights of the scaled row-submatrix picked out by a diagonal sampling
// matrix given as (row, scale) pairs.  Throws RankDeficient when the surviving
// rows no longer span.
inline WeightBoundReport sampled_weight_bound(
    const Matrix& A, const std::vector<std::pair<Index, double>>& sample_rows, double p) {
  const Index m = Index(sample_rows.size());
  if (m < A.cols()) throw RankDeficient("sampled_weight_bound: fewer sampled rows than columns");
  Matrix SA(m, A.cols());
  for (Index j = 0; j < m; ++j)
    SA.row(j) = sample_rows[std::size_t(j)].second * A.row(sample_rows[std::size_t(j)].first);
  LewisWeights lw = compute_lewis_weights(SA, p);
  WeightBoundReport rep;
  rep.m = m;
  rep.max_weight = lw.w.maxCoeff();
  return rep;
}

}  // namespace actreg
