#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "actreg/active.hpp"
#include "actreg/common.hpp"
#include "actreg/lipschitz.hpp"
#include "actreg/rng.hpp"
#include "actreg/solver.hpp"

namespace actreg {

enum class HardKind { SmallP, LargeP };

// Block-diagonal distinguishing instance: d independent one-dimensional
// blocks of 2m rows each.  SmallP blocks hold m response pairs drawn from
// {u = (3,2), v = (2,3)} with the u-frequency biased by eps under D0; LargeP
// blocks are all-ones with one spike of height 1 + m^(1/p) planted in the
// half matching the label.  truth[i] = 1 means block i came from D0.
struct HardInstance {
  HardKind kind = HardKind::SmallP;
  double p = 2.0;
  double eps = 0.25;
  Index d = 1;
  Index m = 1;  // pairs per block (SmallP) / half-block length (LargeP)
  Matrix A;     // (2 m d) x d
  Vector b;
  std::vector<int> truth;        // per block, 1 = D0
  std::vector<Index> k_counts;   // SmallP: #u pairs; LargeP: spike row within the block
  LipschitzFn f;
  double spike = 0.0;  // LargeP spike height 1 + m^(1/p)

  Index block_rows() const { return 2 * m; }
  Index n() const { return 2 * m * d; }
};

inline Index default_block_size(HardKind kind, double p, double eps, Index d) {
  if (kind == HardKind::SmallP)
    return Index(std::ceil(8.0 * std::log(double(std::max<Index>(d, 2))) / (eps * eps)));
  return Index(std::ceil(std::pow(eps, -p)));
}

inline HardInstance generate(HardKind kind, double p, double eps, Index d, std::uint64_t seed,
                             Index m_override = 0) {
  if (!(eps > 0.0) || eps > 0.25) throw InvalidInput("generate: eps must lie in (0, 1/4]");
  if (d < 1) throw InvalidInput("generate: d must be >= 1");
  if (kind == HardKind::SmallP && (p < 1.0 || p > 2.0))
    throw InvalidInput("generate: SmallP needs p in [1, 2]");
  if (kind == HardKind::LargeP && p < 2.0)
    throw InvalidInput("generate: LargeP needs p >= 2");

  HardInstance inst;
  inst.kind = kind;
  inst.p = p;
  inst.eps = eps;
  inst.d = d;
  inst.m = m_override > 0 ? m_override : default_block_size(kind, p, eps, d);
  inst.f = (kind == HardKind::SmallP) ? LipschitzFn::lb_small() : LipschitzFn::lb_large();
  const Index bm = inst.m;
  inst.A = Matrix::Zero(2 * bm * d, d);
  inst.b.resize(2 * bm * d);
  inst.truth.resize(std::size_t(d));
  inst.k_counts.resize(std::size_t(d));
  // spike height chosen so the planted block cost is exactly 2m
  inst.spike = (kind == HardKind::LargeP) ? 1.0 + std::pow(double(bm), 1.0 / p) : 0.0;

  for (Index blk = 0; blk < d; ++blk) {
    CounterRng rng = CounterRng::keyed(seed, 0xb10cULL, std::uint64_t(blk));
    int label = rng.uniform() < 0.5 ? 1 : 0;
    inst.truth[std::size_t(blk)] = label;
    const Index base = blk * 2 * bm;
    if (kind == HardKind::SmallP) {
      double pu = label ? 0.5 + eps : 0.5 - eps;
      Index ku = 0;
      for (Index j = 0; j < bm; ++j) {
        inst.A(base + 2 * j, blk) = 1.0;
        inst.A(base + 2 * j + 1, blk) = -1.0;
        bool is_u = rng.uniform() < pu;
        if (is_u) {
          inst.b[base + 2 * j] = 3.0;
          inst.b[base + 2 * j + 1] = 2.0;
          ++ku;
        } else {
          inst.b[base + 2 * j] = 2.0;
          inst.b[base + 2 * j + 1] = 3.0;
        }
      }
      inst.k_counts[std::size_t(blk)] = ku;
    } else {
      for (Index j = 0; j < bm; ++j) {
        inst.A(base + j, blk) = 1.0;
        inst.A(base + bm + j, blk) = -1.0;
      }
      inst.b.segment(base, 2 * bm).setOnes();
      Index off = Index(rng.uniform() * double(bm));
      if (off >= bm) off = bm - 1;
      Index pos = label ? off : bm + off;
      inst.b[base + pos] = inst.spike;
      inst.k_counts[std::size_t(blk)] = pos;
    }
  }
  return inst;
}

struct ExactOpt {
  double total = 0.0;
  Vector x_star;
  std::vector<double> block_values;
};

// Closed-form block optima.  SmallP: costs 2k at -6 and 2(m-k) at +6, so the
// value is 2 min(k, m-k) with the sign following the majority (ties to +6).
// LargeP: the planted side costs exactly 2m at x = +-1.
inline ExactOpt exact_opt(const HardInstance& inst) {
  ExactOpt out;
  out.x_star.resize(inst.d);
  out.block_values.resize(std::size_t(inst.d));
  for (Index blk = 0; blk < inst.d; ++blk) {
    double val;
    double arg;
    if (inst.kind == HardKind::SmallP) {
      double k = double(inst.k_counts[std::size_t(blk)]);
      double mk = double(inst.m) - k;
      val = 2.0 * std::min(k, mk);
      arg = (k >= mk) ? 6.0 : -6.0;
    } else {
      val = 2.0 * double(inst.m);
      arg = (inst.k_counts[std::size_t(blk)] < inst.m) ? 1.0 : -1.0;
    }
    out.block_values[std::size_t(blk)] = val;
    out.x_star[blk] = arg;
    out.total += val;
  }
  return out;
}

// the block objective restricted to one coordinate, with no regularizer
inline RegularizedObjective block_objective(const HardInstance& inst, Index blk) {
  const Index bm = inst.block_rows();
  Matrix A1(bm, 1);
  Vector b1(bm);
  const Index base = blk * bm;
  for (Index j = 0; j < bm; ++j) {
    A1(j, 0) = inst.A(base + j, blk);
    b1[j] = inst.b[base + j];
  }
  auto all = RegularizedObjective::identity_diag(bm);
  return RegularizedObjective::build(A1, all, b1, all, inst.f, inst.p, 0.0);
}

struct LocalMinimaReport {
  bool ok = true;
  double max_violation = 0.0;  // worst amount a grid point undercuts its half-line anchor
};

// Grid check that each half-line's minimum sits at the anchor points (+-6 for
// SmallP on [-20, 20], +-1 for LargeP on [-3, 3]).
inline LocalMinimaReport local_minima_check(const HardInstance& inst, int grid_points = 4001) {
  const double lim = inst.kind == HardKind::SmallP ? 20.0 : 3.0;
  const double anchor = inst.kind == HardKind::SmallP ? 6.0 : 1.0;
  LocalMinimaReport rep;
  for (Index blk = 0; blk < inst.d; ++blk) {
    RegularizedObjective obj = block_objective(inst, blk);
    auto val = [&](double x) {
      Vector v(1);
      v[0] = x;
      return obj.value(v);
    };
    const double neg_floor = val(-anchor), pos_floor = val(anchor);
    const double h = 2.0 * lim / double(grid_points - 1);
    for (int g = 0; g < grid_points; ++g) {
      double x = -lim + h * double(g);
      double fl = x <= 0.0 ? neg_floor : pos_floor;
      if (x == 0.0) fl = std::min(neg_floor, pos_floor);
      double gap = fl - val(x);
      if (gap > rep.max_violation) rep.max_violation = gap;
    }
  }
  rep.ok = rep.max_violation <= 1e-9;
  return rep;
}

struct DistinguishReport {
  std::vector<int> guesses;  // 1 = D0
  Index correct_count = 0;
};

// Per-block label guess from the sign of the solution: both families plant
// the D0 optimum on the positive side, so x_hat_i > 0 reads as D0 and ties
// at zero resolve to D1.
inline DistinguishReport distinguish(const HardInstance& inst, const Vector& x_hat) {
  if (x_hat.size() != inst.d) throw InvalidInput("distinguish: dimension mismatch");
  DistinguishReport rep;
  rep.guesses.resize(std::size_t(inst.d));
  for (Index blk = 0; blk < inst.d; ++blk) {
    int guess = x_hat[blk] > 0.0 ? 1 : 0;
    rep.guesses[std::size_t(blk)] = guess;
    if (guess == inst.truth[std::size_t(blk)]) ++rep.correct_count;
  }
  return rep;
}

inline Index distinguish_threshold(Index d) { return (2 * d + 2) / 3; }  // ceil(2d/3)

// ||A x*||_p^p in closed form: every row contributes |anchor|^p
inline double exact_ax_star_norm(const HardInstance& inst) {
  double anchor = inst.kind == HardKind::SmallP ? 6.0 : 1.0;
  return double(inst.n()) * pow_abs(anchor, inst.p);
}

struct SweepRow {
  long budget = 0;
  double guarantee_rate = 0.0;   // fraction of trials with ratio <= eps
  double distinguish_rate = 0.0; // fraction with correct_count >= ceil(2d/3)
  double mean_queries = 0.0;
  double median_ratio = 0.0;
};

// Query-budget sweep over freshly generated instances; the exact optimum
// serves as the evaluation oracle.
inline std::vector<SweepRow> query_complexity_sweep(HardKind kind, double p, double eps,
                                                    Index d, const std::vector<long>& budgets,
                                                    int trials, std::uint64_t seed) {
  std::vector<SweepRow> table;
  for (long budget : budgets) {
    SweepRow row;
    row.budget = budget;
    std::vector<double> ratios;
    for (int t = 0; t < trials; ++t) {
      std::uint64_t ts = seed ^ hash_combine(hash_combine(0x5eedULL, std::uint64_t(budget)),
                                             std::uint64_t(t));
      HardInstance inst = generate(kind, p, eps, d, ts);
      ExactOpt opt = exact_opt(inst);
      EvalOracle oracle{opt.total, exact_ax_star_norm(inst)};
      RegressionProblem prob(inst.A, inst.b, inst.f, inst.p, inst.eps);
      ActiveReport rep = run_single_stage_budget(prob, budget, ts, &oracle);
      DistinguishReport dr = distinguish(inst, rep.x_hat);
      if (rep.ratio <= inst.eps) row.guarantee_rate += 1.0;
      if (dr.correct_count >= distinguish_threshold(d)) row.distinguish_rate += 1.0;
      row.mean_queries += double(rep.queries_used);
      ratios.push_back(rep.ratio);
    }
    row.guarantee_rate /= double(trials);
    row.distinguish_rate /= double(trials);
    row.mean_queries /= double(trials);
    std::sort(ratios.begin(), ratios.end());
    row.median_ratio = ratios[ratios.size() / 2];
    table.push_back(row);
  }
  return table;
}

// Columnar text round trip: header (kind, p, eps, d, m), the b entries, then
// the truth labels.  A and the spike/count metadata are reconstructed.
inline void write_instance(const HardInstance& inst, std::ostream& os) {
  char buf[64];
  os << (inst.kind == HardKind::SmallP ? "smallp" : "largep");
  std::snprintf(buf, sizeof buf, " %.17g %.17g", inst.p, inst.eps);
  os << buf << ' ' << inst.d << ' ' << inst.m << '\n';
  for (Index i = 0; i < inst.b.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g\n", inst.b[i]);
    os << buf;
  }
  for (Index blk = 0; blk < inst.d; ++blk) os << inst.truth[std::size_t(blk)] << '\n';
}

inline void write_instance(const HardInstance& inst, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InvalidInput("write_instance: cannot open " + path);
  write_instance(inst, os);
}

inline HardInstance read_instance(std::istream& is) {
  std::string kind_tok;
  double p, eps;
  Index d, m;
  if (!(is >> kind_tok >> p >> eps >> d >> m))
    throw InvalidInput("read_instance: bad header");
  HardKind kind;
  if (kind_tok == "smallp")
    kind = HardKind::SmallP;
  else if (kind_tok == "largep")
    kind = HardKind::LargeP;
  else
    throw InvalidInput("read_instance: unknown kind " + kind_tok);

  HardInstance inst;
  inst.kind = kind;
  inst.p = p;
  inst.eps = eps;
  inst.d = d;
  inst.m = m;
  inst.f = kind == HardKind::SmallP ? LipschitzFn::lb_small() : LipschitzFn::lb_large();
  inst.spike = kind == HardKind::LargeP ? 1.0 + std::pow(double(m), 1.0 / p) : 0.0;
  const Index bm = m;
  inst.A = Matrix::Zero(2 * bm * d, d);
  inst.b.resize(2 * bm * d);
  for (Index i = 0; i < inst.b.size(); ++i)
    if (!(is >> inst.b[i])) throw InvalidInput("read_instance: truncated b");
  inst.truth.resize(std::size_t(d));
  for (Index blk = 0; blk < d; ++blk) {
    int t;
    if (!(is >> t)) throw InvalidInput("read_instance: truncated labels");
    inst.truth[std::size_t(blk)] = t;
  }
  inst.k_counts.resize(std::size_t(d));
  for (Index blk = 0; blk < d; ++blk) {
    const Index base = blk * 2 * bm;
    if (kind == HardKind::SmallP) {
      Index ku = 0;
      for (Index j = 0; j < bm; ++j) {
        inst.A(base + 2 * j, blk) = 1.0;
        inst.A(base + 2 * j + 1, blk) = -1.0;
        if (inst.b[base + 2 * j] == 3.0) ++ku;
      }
      inst.k_counts[std::size_t(blk)] = ku;
    } else {
      Index pos = 0;
      for (Index j = 0; j < bm; ++j) {
        inst.A(base + j, blk) = 1.0;
        inst.A(base + bm + j, blk) = -1.0;
      }
      for (Index j = 0; j < 2 * bm; ++j)
        if (inst.b[base + j] != 1.0) pos = j;
      inst.k_counts[std::size_t(blk)] = pos;
    }
  }
  return inst;
}

inline HardInstance read_instance(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("read_instance: cannot open " + path);
  return read_instance(is);
}

}  // namespace actreg
