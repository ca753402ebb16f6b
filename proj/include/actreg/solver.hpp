#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "actreg/common.hpp"
#include "actreg/lipschitz.hpp"
#include "actreg/rng.hpp"

namespace actreg {

// Weighted objective  sum_i dw_i |f((A x)_i) - b_i|^p  +  tau * sum_j rw_j |(A x)_j|^p
// with dw = D_ii^p over the sampled rows (b is materialized only there) and
// rw = reg_jj^p over the regularizer's support.
struct RegularizedObjective {
  Matrix Ad;        // data rows, compacted
  Vector data_w;    // D_ii^p, aligned with Ad
  Vector b;         // sampled entries only, aligned with Ad
  Matrix Ar;        // regularizer rows, compacted
  Vector reg_w;     // reg_jj^p, aligned with Ar
  LipschitzFn f;
  double p = 2.0;
  double tau = 0.0;
  Index dim = 0;

  static RegularizedObjective build(const Matrix& A,
                                    const std::vector<std::pair<Index, double>>& data_diag,
                                    const Vector& b_at_rows,
                                    const std::vector<std::pair<Index, double>>& reg_diag,
                                    LipschitzFn f, double p, double tau) {
    if (p < 1.0) throw InvalidInput("objective: p must be >= 1");
    RegularizedObjective o;
    o.dim = A.cols();
    o.f = std::move(f);
    o.p = p;
    o.tau = tau;
    const Index nd = Index(data_diag.size());
    if (b_at_rows.size() != nd) throw InvalidInput("objective: b must align with data rows");
    o.Ad.resize(nd, A.cols());
    o.data_w.resize(nd);
    o.b = b_at_rows;
    for (Index i = 0; i < nd; ++i) {
      o.Ad.row(i) = A.row(data_diag[std::size_t(i)].first);
      o.data_w[i] = pow_abs(data_diag[std::size_t(i)].second, p);
    }
    const Index nr = Index(reg_diag.size());
    o.Ar.resize(nr, A.cols());
    o.reg_w.resize(nr);
    for (Index j = 0; j < nr; ++j) {
      o.Ar.row(j) = A.row(reg_diag[std::size_t(j)].first);
      o.reg_w[j] = pow_abs(reg_diag[std::size_t(j)].second, p);
    }
    return o;
  }

  static std::vector<std::pair<Index, double>> identity_diag(Index n) {
    std::vector<std::pair<Index, double>> d;
    d.reserve(std::size_t(n));
    for (Index i = 0; i < n; ++i) d.emplace_back(i, 1.0);
    return d;
  }

  double value(const Vector& x) const {
    double s = value_unchecked(x);
    if (!std::isfinite(s)) throw NumericalFailure("objective value is not finite");
    return s;
  }

  // no-throw variant for line searches: overflow at a trial point is a reason
  // to reject the step, not abort the solve
  double value_unchecked(const Vector& x) const {
    double s = 0.0;
    Vector u = Ad * x;
    for (Index i = 0; i < u.size(); ++i) s += data_w[i] * pow_abs(f.eval(u[i]) - b[i], p);
    if (tau != 0.0) {
      Vector v = Ar * x;
      for (Index j = 0; j < v.size(); ++j) s += tau * reg_w[j] * pow_abs(v[j], p);
    }
    return s;
  }

  // analytic subgradient; kinks of f and of |.|^p use averaged one-sided slopes
  Vector subgradient(const Vector& x) const { return grad_impl(x, 0.0); }

  // |t|^p smoothed to (t^2 + mu^2)^(p/2) - mu^p; exact at mu = 0
  double value_smoothed(const Vector& x, double mu) const {
    double s = value_smoothed_unchecked(x, mu);
    if (!std::isfinite(s)) throw NumericalFailure("objective value is not finite");
    return s;
  }

  double value_smoothed_unchecked(const Vector& x, double mu) const {
    if (mu == 0.0) return value_unchecked(x);
    double s = 0.0;
    Vector u = Ad * x;
    for (Index i = 0; i < u.size(); ++i) s += data_w[i] * phi(f.eval(u[i]) - b[i], mu);
    if (tau != 0.0) {
      Vector v = Ar * x;
      for (Index j = 0; j < v.size(); ++j) s += tau * reg_w[j] * phi(v[j], mu);
    }
    return s;
  }

  Vector grad_smoothed(const Vector& x, double mu) const { return grad_impl(x, mu); }

 private:
  double phi(double t, double mu) const {
    return std::pow(t * t + mu * mu, p / 2.0) - std::pow(mu, p);
  }
  double dphi(double t, double mu) const {
    if (mu == 0.0) {
      if (t == 0.0) return 0.0;
      return p * pow_abs(t, p - 1.0) * (t > 0 ? 1.0 : -1.0);
    }
    return p * t * std::pow(t * t + mu * mu, p / 2.0 - 1.0);
  }

  Vector grad_impl(const Vector& x, double mu) const {
    Vector g = Vector::Zero(dim);
    Vector u = Ad * x;
    Vector coef(u.size());
    for (Index i = 0; i < u.size(); ++i)
      coef[i] = data_w[i] * dphi(f.eval(u[i]) - b[i], mu) * f.subgradient(u[i]);
    g.noalias() += Ad.transpose() * coef;
    if (tau != 0.0) {
      Vector v = Ar * x;
      Vector rcoef(v.size());
      for (Index j = 0; j < v.size(); ++j) rcoef[j] = tau * reg_w[j] * dphi(v[j], mu);
      g.noalias() += Ar.transpose() * rcoef;
    }
    return g;
  }
};

struct SolveReport {
  Vector x_hat;
  double objective_value = 0.0;
  int restarts_used = 0;
  int best_restart = 0;
  double grad_norm_at_end = 0.0;
};

inline int default_restarts(Index d) { return d <= 16 ? 8 : 16; }

namespace detail {

// damped Gauss-Newton for p = 2; falls back to a plain gradient step when the
// model step fails to decrease the true objective
inline Vector minimize_gn(const RegularizedObjective& o, Vector x, int max_iter = 200) {
  // trial values use the unchecked evaluation: a non-finite value at a trial
  // point rejects the step (the < comparison is false for NaN), and the
  // damping is capped so lambda * hscale cannot itself overflow
  constexpr double lambda_max = 1e12;
  double fx = o.value_unchecked(x);
  double lambda = 1e-8;
  for (int it = 0; it < max_iter; ++it) {
    Vector u = o.Ad * x;
    Vector r(u.size()), fp(u.size());
    for (Index i = 0; i < u.size(); ++i) {
      r[i] = o.f.eval(u[i]) - o.b[i];
      fp[i] = o.f.subgradient(u[i]);
    }
    Vector v = o.Ar * x;
    Vector g = o.Ad.transpose() * (o.data_w.array() * fp.array() * r.array()).matrix();
    if (o.tau != 0.0)
      g.noalias() += o.tau * (o.Ar.transpose() * (o.reg_w.array() * v.array()).matrix());
    if (!g.allFinite()) break;
    if (2.0 * g.norm() <= 1e-8 * (1.0 + fx)) break;

    Matrix H = o.Ad.transpose() *
               (o.data_w.array() * fp.array() * fp.array()).matrix().asDiagonal() * o.Ad;
    if (o.tau != 0.0) H.noalias() += o.tau * (o.Ar.transpose() * o.reg_w.asDiagonal() * o.Ar);
    double hscale = std::max(H.trace() / double(o.dim), 1e-12);

    bool accepted = false;
    for (int tries = 0; tries < 24 && !accepted; ++tries) {
      Matrix Hl = H + (lambda * hscale) * Matrix::Identity(o.dim, o.dim);
      Vector step = Hl.ldlt().solve(-g);
      Vector xt = x + step;
      double ft = o.value_unchecked(xt);
      if (ft < fx) {
        x = xt;
        fx = ft;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
      } else {
        if (lambda >= lambda_max) break;
        lambda = std::min(lambda * 10.0, lambda_max);
      }
    }
    if (!accepted) {
      // gradient step with backtracking as a last resort
      double t = 1.0 / std::max(1.0, hscale);
      bool moved = false;
      for (int bt = 0; bt < 40; ++bt, t *= 0.5) {
        Vector xt = x - t * (2.0 * g);
        double ft = o.value_unchecked(xt);
        if (ft < fx - 1e-4 * t * 4.0 * g.squaredNorm()) {
          x = xt;
          fx = ft;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
  }
  return x;
}

// Armijo-backtracked descent on the smoothed objective; smoothing is annealed
// twice by a factor of 10 for p < 2
inline Vector minimize_descent(const RegularizedObjective& o, Vector x, int max_iter = 5000) {
  std::vector<double> stages;
  if (o.p < 2.0) {
    double scale = 1.0;
    for (Index i = 0; i < o.b.size(); ++i) scale = std::max(scale, std::fabs(o.b[i]));
    double mu0 = 1e-6 * scale;
    stages = {mu0, mu0 * 0.1, mu0 * 0.01};
  } else {
    stages = {0.0};
  }
  int iters_left = max_iter;
  double t = 1.0;
  for (double mu : stages) {
    // unchecked trial values: a step that overflows just fails the Armijo test
    double fx = o.value_smoothed_unchecked(x, mu);
    int stage_budget = int(iters_left / double(stages.size())) + 1;
    for (int it = 0; it < stage_budget && iters_left > 0; ++it, --iters_left) {
      Vector g = o.grad_smoothed(x, mu);
      if (!g.allFinite()) break;
      double gn = g.norm();
      if (gn <= 1e-8 * (1.0 + fx)) break;
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
        Vector xt = x - t * g;
        double ft = o.value_smoothed_unchecked(xt, mu);
        if (ft <= fx - 1e-4 * t * gn * gn) {
          x = xt;
          fx = ft;
          moved = true;
          t *= 2.0;
          break;
        }
      }
      if (!moved) break;
    }
  }
  return x;
}

// weighted least squares on the linearization f(t) ~ c t; ridge-stabilized
inline Vector warm_start_ls(const RegularizedObjective& o) {
  if (o.Ad.rows() == 0) return Vector::Zero(o.dim);
  double c = o.f.subgradient(0.0);
  if (c == 0.0) c = o.f.lipschitz_constant();
  if (c == 0.0) c = 1.0;
  Matrix H = o.Ad.transpose() * o.data_w.asDiagonal() * o.Ad;
  Vector rhs = o.Ad.transpose() * (o.data_w.asDiagonal() * o.b) / c;
  H += (1e-10 * std::max(H.trace(), 1.0)) * Matrix::Identity(o.dim, o.dim);
  Vector x = H.ldlt().solve(rhs);
  if (!x.allFinite()) return Vector::Zero(o.dim);
  return x;
}

// cyclic exact-ish line search along coordinate directions: coarse bracket,
// then golden section inside the winning cell.  Links with creases can strand
// a Newton-type step on the wrong side of a kink; at these dimensions an
// O(rows) sweep per coordinate is cheap insurance and only ever descends.
inline Vector polish_coordinates(const RegularizedObjective& o, Vector x, int rounds = 2,
                                 int grid = 25) {
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double fx = o.value_unchecked(x);
  if (!std::isfinite(fx)) return x;
  double bscale = 1.0;
  for (Index i = 0; i < o.b.size(); ++i) bscale = std::max(bscale, std::fabs(o.b[i]));
  const double L = std::max(o.f.lipschitz_constant(), 1e-12);
  Vector u = o.Ad * x;
  Vector v = o.Ar * x;
  auto val_at = [&](Index j, double t) {
    double delta = t - x[j];
    double s = 0.0;
    for (Index i = 0; i < u.size(); ++i)
      s += o.data_w[i] * pow_abs(o.f.eval(u[i] + delta * o.Ad(i, j)) - o.b[i], o.p);
    if (o.tau != 0.0)
      for (Index i = 0; i < v.size(); ++i)
        s += o.tau * o.reg_w[i] * pow_abs(v[i] + delta * o.Ar(i, j), o.p);
    return s;
  };
  for (int round = 0; round < rounds; ++round) {
    bool improved = false;
    for (Index j = 0; j < o.dim; ++j) {
      double cmax = 0.0;
      for (Index i = 0; i < o.Ad.rows(); ++i) cmax = std::max(cmax, std::fabs(o.Ad(i, j)));
      for (Index i = 0; i < o.Ar.rows(); ++i) cmax = std::max(cmax, std::fabs(o.Ar(i, j)));
      if (cmax <= 0.0) continue;
      // wide enough that moving coordinate j can swing any fitted response
      // past the data scale
      double R = 4.0 * bscale / (L * cmax) + 2.0 * std::fabs(x[j]) + 1.0;
      double h = 2.0 * R / double(grid - 1);
      double bestt = x[j], bestv = fx;
      for (int i2 = 0; i2 < grid; ++i2) {
        double t = x[j] - R + h * double(i2);
        double ft = val_at(j, t);
        if (ft < bestv) {
          bestv = ft;
          bestt = t;
        }
      }
      double a = bestt - h, b2 = bestt + h;
      double c1 = b2 - gr * (b2 - a), c2 = a + gr * (b2 - a);
      double f1 = val_at(j, c1), f2 = val_at(j, c2);
      for (int it = 0; it < 40; ++it) {
        if (f1 <= f2) {
          b2 = c2;
          c2 = c1;
          f2 = f1;
          c1 = b2 - gr * (b2 - a);
          f1 = val_at(j, c1);
        } else {
          a = c1;
          c1 = c2;
          f1 = f2;
          c2 = a + gr * (b2 - a);
          f2 = val_at(j, c2);
        }
      }
      double tm = bestt, fm = bestv;
      if (f1 < fm) {
        fm = f1;
        tm = c1;
      }
      if (f2 < fm) {
        fm = f2;
        tm = c2;
      }
      if (fm < fx) {
        double delta = tm - x[j];
        u += delta * o.Ad.col(j);
        v += delta * o.Ar.col(j);
        x[j] = tm;
        fx = fm;
        improved = true;
      }
    }
    if (!improved) break;
  }
  return x;
}

struct Candidate {
  Vector x;
  double val = std::numeric_limits<double>::infinity();
  double reg_norm = std::numeric_limits<double>::infinity();
  int restart = -1;
};

inline double reg_seminorm(const RegularizedObjective& o, const Vector& x) {
  Vector v = o.Ar * x;
  double s = 0.0;
  for (Index j = 0; j < v.size(); ++j) s += o.reg_w[j] * pow_abs(v[j], o.p);
  return s;
}

inline bool better(const Candidate& a, const Candidate& b) {
  if (a.val != b.val) return a.val < b.val;
  if (a.reg_norm != b.reg_norm) return a.reg_norm < b.reg_norm;
  return std::lexicographical_compare(a.x.data(), a.x.data() + a.x.size(), b.x.data(),
                                      b.x.data() + b.x.size());
}

}  // namespace detail

// Multi-start minimization.  Restart 0 is the origin, restart 1 a linearized
// least-squares warm start, later restarts are +-paired random directions
// scaled so the predicted response magnitude matches ||D b||_p.  Ties between
// restarts break toward the smaller regularizer seminorm, then lexicographic.
inline SolveReport solve(const RegularizedObjective& obj, int restarts, std::uint64_t seed) {
  if (restarts < 1) throw InvalidInput("solve: need at least one restart");
  const Index d = obj.dim;

  double bnorm = 0.0;
  for (Index i = 0; i < obj.b.size(); ++i) bnorm += obj.data_w[i] * pow_abs(obj.b[i], obj.p);
  bnorm = std::pow(bnorm, 1.0 / obj.p);

  detail::Candidate best;
  Vector pending_dir;
  for (int r = 0; r < restarts; ++r) {
    Vector x0;
    if (r == 0) {
      x0 = Vector::Zero(d);
    } else if (r == 1) {
      x0 = detail::warm_start_ls(obj);
    } else if (((r - 2) & 1) == 0) {
      CounterRng rng = CounterRng::keyed(seed, 0x7e57a7u, std::uint64_t(r));
      Vector g(d);
      for (Index j = 0; j < d; ++j) g[j] = rng.normal();
      Vector y = obj.Ad * g;
      double yn = 0.0;
      for (Index i = 0; i < y.size(); ++i) yn += obj.data_w[i] * pow_abs(y[i], obj.p);
      yn = std::pow(yn, 1.0 / obj.p) * std::max(obj.f.lipschitz_constant(), 1e-12);
      double s = yn > 0.0 ? 2.0 * bnorm / yn : 1.0;
      pending_dir = s * g;
      x0 = pending_dir;
    } else {
      x0 = pending_dir.size() == d ? Vector(-pending_dir) : Vector(Vector::Zero(d));
    }

    Vector xr = (obj.p == 2.0) ? detail::minimize_gn(obj, x0) : detail::minimize_descent(obj, x0);
    xr = detail::polish_coordinates(obj, std::move(xr));
    detail::Candidate cand;
    cand.x = xr;
    cand.val = obj.value_unchecked(xr);
    cand.reg_norm = detail::reg_seminorm(obj, xr);
    cand.restart = r;
    // a restart that diverged to a non-finite point is dropped, not fatal
    if (std::isfinite(cand.val) && detail::better(cand, best)) best = cand;
    // the origin is always a candidate, so the report never exceeds ||D b||_p^p
    detail::Candidate origin{Vector::Zero(d), 0.0, 0.0, r};
    origin.val = obj.value(origin.x);
    if (detail::better(origin, best)) best = origin;
  }

  SolveReport rep;
  rep.x_hat = best.x;
  rep.objective_value = obj.value(best.x);
  rep.restarts_used = restarts;
  rep.best_restart = best.restart;
  rep.grad_norm_at_end = obj.subgradient(best.x).norm();
  return rep;
}

// Exact oracle for one-dimensional objectives: dense grid bracketing followed
// by golden-section refinement inside the best bracket.
inline SolveReport solve_1d_exact(const RegularizedObjective& obj, double lo, double hi,
                                  int grid_points = 4001) {
  if (obj.dim != 1) throw InvalidInput("solve_1d_exact: objective must be one-dimensional");
  if (!(hi > lo) || grid_points < 3) throw InvalidInput("solve_1d_exact: bad bracket or grid");
  auto val = [&](double x) {
    Vector v(1);
    v[0] = x;
    return obj.value(v);
  };
  double bestx = lo, bestv = val(lo);
  int besti = 0;
  const double h = (hi - lo) / double(grid_points - 1);
  for (int i = 1; i < grid_points; ++i) {
    double x = lo + h * double(i);
    double v = val(x);
    if (v < bestv) {
      bestv = v;
      bestx = x;
      besti = i;
    }
  }
  double a = lo + h * double(std::max(0, besti - 1));
  double b = lo + h * double(std::min(grid_points - 1, besti + 1));
  const double gr = 0.6180339887498948482;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = val(x1), f2 = val(x2);
  for (int it = 0; it < 200 && (b - a) > 1e-13 * std::max(1.0, std::fabs(a) + std::fabs(b));
       ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = val(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = val(x2);
    }
  }
  double xm = 0.5 * (a + b), fm = val(xm);
  if (fm < bestv) {
    bestv = fm;
    bestx = xm;
  }

  SolveReport rep;
  rep.x_hat = Vector::Constant(1, bestx);
  rep.objective_value = bestv;
  rep.restarts_used = 0;
  rep.best_restart = 0;
  rep.grad_norm_at_end = obj.subgradient(rep.x_hat).norm();
  return rep;
}

}  // namespace actreg
