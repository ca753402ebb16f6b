#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "actreg/active.hpp"
#include "actreg/common.hpp"
#include "actreg/hard_instances.hpp"
#include "actreg/lipschitz.hpp"
#include "actreg/rng.hpp"

namespace actreg {

enum class ProblemKind { PlantedReLU, PlantedIdentity, HardSmallP, HardLargeP };
enum class PipelineKind { Single, TwoStage, Direct };

inline std::string problem_name(ProblemKind k) {
  switch (k) {
    case ProblemKind::PlantedReLU: return "planted-relu";
    case ProblemKind::PlantedIdentity: return "planted-identity";
    case ProblemKind::HardSmallP: return "hard-small-p";
    case ProblemKind::HardLargeP: return "hard-large-p";
  }
  return "unknown";
}

inline ProblemKind problem_from_name(const std::string& s) {
  if (s == "planted-relu") return ProblemKind::PlantedReLU;
  if (s == "planted-identity") return ProblemKind::PlantedIdentity;
  if (s == "hard-small-p") return ProblemKind::HardSmallP;
  if (s == "hard-large-p") return ProblemKind::HardLargeP;
  throw ConfigError("unknown problem kind: " + s);
}

inline std::string pipeline_name(PipelineKind k) {
  switch (k) {
    case PipelineKind::Single: return "single";
    case PipelineKind::TwoStage: return "two-stage";
    case PipelineKind::Direct: return "direct";
  }
  return "unknown";
}

inline PipelineKind pipeline_from_name(const std::string& s) {
  if (s == "single") return PipelineKind::Single;
  if (s == "two-stage") return PipelineKind::TwoStage;
  if (s == "direct") return PipelineKind::Direct;
  throw ConfigError("unknown pipeline: " + s);
}

struct ExperimentConfig {
  ProblemKind problem = ProblemKind::PlantedReLU;
  PipelineKind pipeline = PipelineKind::Single;
  double p = 2.0;
  double eps = 0.25;
  Index n = 2000;
  Index d = 5;
  std::vector<long> budgets;
  int trials = 20;
  std::uint64_t seed = 1;
  PipelineConstants constants;
  std::string f_name;  // empty selects the family default
  std::string out_path;
  bool timing = false;  // wall_ms stays 0 unless enabled, keeping CSV byte-stable
};

inline bool is_hard(ProblemKind k) {
  return k == ProblemKind::HardSmallP || k == ProblemKind::HardLargeP;
}

inline void validate(const ExperimentConfig& cfg) {
  if (!(cfg.eps > 0.0) || cfg.eps >= 1.0) throw ConfigError("eps must lie in (0, 1)");
  if (cfg.p < 1.0) throw ConfigError("p must be >= 1");
  if (cfg.d < 1) throw ConfigError("d must be >= 1");
  if (!is_hard(cfg.problem) && cfg.n < cfg.d) throw ConfigError("n must be >= d");
  if (cfg.trials < 1) throw ConfigError("trials must be >= 1");
  if (cfg.budgets.empty()) throw ConfigError("budgets must be nonempty");
  for (long b : cfg.budgets)
    if (b < 0) throw ConfigError("budgets must be >= 0");
  if (is_hard(cfg.problem) && cfg.eps > 0.25)
    throw ConfigError("hard instances need eps <= 1/4");
}

struct PlantedInstance {
  Matrix A;
  Vector b;
  Vector x0;
  LipschitzFn f;
};

// Gaussian design, unit-norm planted direction, noise level 0.1
inline PlantedInstance make_planted(const LipschitzFn& f, Index n, Index d,
                                    std::uint64_t seed) {
  PlantedInstance inst;
  inst.f = f;
  CounterRng rng = CounterRng::keyed(seed, 0x9e4e5a7eULL);
  inst.A.resize(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) inst.A(i, j) = rng.normal();
  inst.x0.resize(d);
  for (Index j = 0; j < d; ++j) inst.x0[j] = rng.normal();
  inst.x0 /= inst.x0.norm();
  inst.b = f.eval_vec(inst.A * inst.x0);
  for (Index i = 0; i < n; ++i) inst.b[i] += 0.1 * rng.normal();
  return inst;
}

struct TrialRow {
  long budget = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  Index queries_used = 0;
  double objective_full = 0.0;
  double opt_estimate = 0.0;
  double ax_star_norm = 0.0;
  double ratio = 0.0;
  bool guarantee_pass = false;
  double wall_ms = 0.0;
  Index correct_count = 0;  // hard kinds only
  bool distinguish_pass = false;
};

struct BudgetSummary {
  long budget = 0;
  double median_ratio = 0.0;
  double pass_rate = 0.0;
  double mean_queries = 0.0;
};

struct ExperimentResult {
  std::vector<TrialRow> rows;
  std::vector<BudgetSummary> summaries;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t trial_seed(std::uint64_t seed, long budget, int trial) {
  return seed ^ hash_combine(hash_combine(0xbad6e7ULL, std::uint64_t(budget)),
                             std::uint64_t(trial));
}

// expected total split count, shared by the budget-to-rate maps
inline long total_split_count(const Matrix& A, double p) {
  LewisWeights lw = compute_lewis_weights(A, p);
  std::vector<long> k = split_counts(lw.w, A.rows(), A.cols());
  long total = 0;
  for (long ki : k) total += ki;
  return total;
}

// Full-data unregularized solve; doubles as its own oracle when none is given.
inline ActiveReport run_direct(RegressionProblem& prob, std::uint64_t seed,
                               const EvalOracle* oracle) {
  const Index n = prob.A.rows();
  prob.b_access.begin_evaluation();
  Vector bfull(n);
  for (Index i = 0; i < n; ++i) bfull[i] = prob.b_access.fetch(i);
  auto all = RegularizedObjective::identity_diag(n);
  RegularizedObjective full =
      RegularizedObjective::build(prob.A, all, bfull, all, prob.f, prob.p, 0.0);
  SolveReport orep = solve(full, 32, hash_combine(seed, 0x0eac1eULL));
  ActiveReport rep;
  rep.x_hat = orep.x_hat;
  rep.queries_used = n;
  rep.objective_full = orep.objective_value;
  rep.opt_estimate = oracle ? oracle->opt : orep.objective_value;
  rep.ax_star_norm = oracle ? oracle->ax_star_norm : lp_pow(prob.A * orep.x_hat, prob.p);
  double L = prob.f.lipschitz_constant();
  double denom = rep.opt_estimate + std::pow(L, prob.p) * rep.ax_star_norm;
  rep.ratio = (rep.objective_full - rep.opt_estimate) / std::max(denom, 1e-300);
  return rep;
}

}  // namespace detail

// stage-1 rate for the two-stage pipeline at this configuration
inline double default_alpha_circ(const Matrix& A, double p, double eps,
                                 const PipelineConstants& c) {
  long total = detail::total_split_count(A, p);
  Index mt = stage1_target(A.rows(), A.cols(), eps, p, c);
  return std::min(1.0, double(mt) / double(total));
}

// One pipeline run on one freshly generated instance.
inline TrialRow run_trial(const ExperimentConfig& cfg, long budget, int trial) {
  TrialRow row;
  row.budget = budget;
  row.trial = trial;
  row.seed = detail::trial_seed(cfg.seed, budget, trial);
  auto t0 = std::chrono::steady_clock::now();

  ActiveReport rep;
  if (is_hard(cfg.problem)) {
    HardKind kind = cfg.problem == ProblemKind::HardSmallP ? HardKind::SmallP : HardKind::LargeP;
    HardInstance inst = generate(kind, cfg.p, cfg.eps, cfg.d, row.seed);
    ExactOpt opt = exact_opt(inst);
    EvalOracle oracle{opt.total, exact_ax_star_norm(inst)};
    RegressionProblem prob(inst.A, inst.b, inst.f, inst.p, inst.eps);
    if (cfg.pipeline == PipelineKind::Single) {
      rep = run_single_stage_budget(prob, budget, row.seed, &oracle);
    } else if (cfg.pipeline == PipelineKind::TwoStage) {
      double ac = default_alpha_circ(prob.A, prob.p, cfg.eps, cfg.constants);
      rep = run_two_stage(prob, 0.0, ac, row.seed, &oracle, budget);
    } else {
      rep = detail::run_direct(prob, row.seed, &oracle);
    }
    DistinguishReport dr = distinguish(inst, rep.x_hat);
    row.correct_count = dr.correct_count;
    row.distinguish_pass = dr.correct_count >= distinguish_threshold(cfg.d);
  } else {
    LipschitzFn f = cfg.f_name.empty()
                        ? (cfg.problem == ProblemKind::PlantedReLU ? LipschitzFn::relu()
                                                                   : LipschitzFn::identity())
                        : LipschitzFn::from_name(cfg.f_name);
    PlantedInstance inst = make_planted(f, cfg.n, cfg.d, row.seed);
    RegressionProblem prob(inst.A, inst.b, inst.f, cfg.p, cfg.eps);
    if (cfg.pipeline == PipelineKind::Single) {
      rep = run_single_stage_budget(prob, budget, row.seed);
    } else if (cfg.pipeline == PipelineKind::TwoStage) {
      double ac = default_alpha_circ(prob.A, prob.p, cfg.eps, cfg.constants);
      rep = run_two_stage(prob, 0.0, ac, row.seed, nullptr, budget);
    } else {
      rep = detail::run_direct(prob, row.seed, nullptr);
    }
  }

  row.queries_used = rep.queries_used;
  row.objective_full = rep.objective_full;
  row.opt_estimate = rep.opt_estimate;
  row.ax_star_norm = rep.ax_star_norm;
  row.ratio = rep.ratio;
  row.guarantee_pass = rep.ratio <= cfg.eps;
  if (cfg.timing) {
    auto t1 = std::chrono::steady_clock::now();
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  return row;
}

inline void write_csv(const ExperimentResult& res, const ExperimentConfig& cfg,
                      std::ostream& os) {
  const bool hard = is_hard(cfg.problem);
  os << "budget,trial,seed,queries_used,objective_full,opt_estimate,ax_star_norm,ratio,"
        "guarantee_pass,wall_ms";
  if (hard) os << ",correct_count,distinguish_pass";
  os << '\n';
  for (const TrialRow& r : res.rows) {
    os << r.budget << ',' << r.trial << ',' << r.seed << ',' << r.queries_used << ','
       << detail::fmt_double(r.objective_full) << ',' << detail::fmt_double(r.opt_estimate)
       << ',' << detail::fmt_double(r.ax_star_norm) << ',' << detail::fmt_double(r.ratio)
       << ',' << (r.guarantee_pass ? 1 : 0) << ',' << detail::fmt_double(r.wall_ms);
    if (hard) os << ',' << r.correct_count << ',' << (r.distinguish_pass ? 1 : 0);
    os << '\n';
  }
}

// Work pool over independent trials; each row lands at its own index, so the
// output order is (budget, trial) no matter which worker finishes first.
inline std::vector<TrialRow> run_trials_pool(const ExperimentConfig& cfg, long budget) {
  std::vector<TrialRow> rows(std::size_t(cfg.trials));
  unsigned hw = std::thread::hardware_concurrency();
  int workers = std::min(cfg.trials, int(hw == 0 ? 1 : hw));
  if (workers <= 1) {
    for (int t = 0; t < cfg.trials; ++t) rows[std::size_t(t)] = run_trial(cfg, budget, t);
    return rows;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int t = next.fetch_add(1); t < cfg.trials; t = next.fetch_add(1)) {
        try {
          rows[std::size_t(t)] = run_trial(cfg, budget, t);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return rows;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  ExperimentResult res;
  for (long budget : cfg.budgets) {
    BudgetSummary sum;
    sum.budget = budget;
    std::vector<double> ratios;
    std::vector<TrialRow> rows = run_trials_pool(cfg, budget);
    for (TrialRow& row : rows) {
      ratios.push_back(row.ratio);
      sum.pass_rate += row.guarantee_pass ? 1.0 : 0.0;
      sum.mean_queries += double(row.queries_used);
      res.rows.push_back(std::move(row));
    }
    sum.pass_rate /= double(cfg.trials);
    sum.mean_queries /= double(cfg.trials);
    std::sort(ratios.begin(), ratios.end());
    sum.median_ratio = ratios.size() % 2 == 1
                           ? ratios[ratios.size() / 2]
                           : 0.5 * (ratios[ratios.size() / 2 - 1] + ratios[ratios.size() / 2]);
    res.summaries.push_back(sum);
  }

  if (!cfg.out_path.empty()) {
    std::ofstream os(cfg.out_path, std::ios::binary);
    if (!os) throw ConfigError("cannot open output file: " + cfg.out_path);
    write_csv(res, cfg, os);
  }
  return res;
}

// expected query count implied by the configured constants (used to turn a
// calibrated constant back into a concrete budget)
inline long default_budget(const ExperimentConfig& cfg) {
  LipschitzFn f = cfg.problem == ProblemKind::PlantedReLU ? LipschitzFn::relu()
                                                          : LipschitzFn::identity();
  Matrix A;
  if (is_hard(cfg.problem)) {
    HardKind kind = cfg.problem == ProblemKind::HardSmallP ? HardKind::SmallP : HardKind::LargeP;
    A = generate(kind, cfg.p, cfg.eps, cfg.d, cfg.seed).A;
  } else {
    A = make_planted(f, cfg.n, cfg.d, detail::trial_seed(cfg.seed, 0, 0)).A;
  }
  long total = detail::total_split_count(A, cfg.p);
  if (cfg.pipeline == PipelineKind::TwoStage) {
    Index mt = stage1_target(A.rows(), cfg.d, cfg.eps, cfg.p, cfg.constants);
    return std::max(1L, std::lround(two_stage_alpha(mt, cfg.d, cfg.eps, cfg.p, cfg.constants) *
                                    2.0 * double(mt)));
  }
  return std::max(
      1L, std::lround(single_stage_alpha(A.rows(), cfg.d, cfg.eps, cfg.p, cfg.constants) *
                      double(total)));
}

// Smallest power-of-two constant whose pass rate reaches the target on the
// configured family, searching upward from 2^-16; the probe budget is the one
// the candidate constant itself implies.  A target of 0 returns 1.  Passing
// means the error-ratio guarantee on planted families; on hard families that
// guarantee is degenerate (the denominator carries ||A x*||_p^p = Theta(n)),
// so the pass criterion there is the distinguisher clearing its threshold.
inline double calibrate_constant(ExperimentConfig cfg, double target_pass, bool two_stage) {
  if (target_pass <= 0.0) return 1.0;
  cfg.pipeline = two_stage ? PipelineKind::TwoStage : PipelineKind::Single;
  const bool hard = is_hard(cfg.problem);
  for (double C = std::pow(2.0, -16); C <= std::pow(2.0, 16) + 0.5; C *= 2.0) {
    if (two_stage)
      cfg.constants.C_two = C;
    else
      cfg.constants.C_single = C;
    long budget = default_budget(cfg);
    int passes = 0;
    for (const TrialRow& row : run_trials_pool(cfg, budget))
      if (hard ? row.distinguish_pass : row.guarantee_pass) ++passes;
    if (double(passes) >= target_pass * double(cfg.trials)) return C;
  }
  throw CalibrationFailed("calibration exceeded 2^16 without reaching the target pass rate");
}

struct CalibrationResult {
  double C_single = 1.0;
  double C_two = 1.0;
};

inline CalibrationResult calibrate_constants(const ExperimentConfig& cfg, double target_pass) {
  CalibrationResult out;
  out.C_single = calibrate_constant(cfg, target_pass, false);
  out.C_two = calibrate_constant(cfg, target_pass, true);
  return out;
}

inline void write_defaults_file(const CalibrationResult& cal, const ExperimentConfig& cfg,
                                const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open defaults file: " + path);
  os << "# calibrated by `bench calibrate` on " << problem_name(cfg.problem) << " (n=" << cfg.n
     << ", d=" << cfg.d << ", p=" << detail::fmt_double(cfg.p)
     << ", eps=" << detail::fmt_double(cfg.eps) << ", trials=" << cfg.trials
     << ", seed=" << cfg.seed << ")\n";
  os << "C_single=" << detail::fmt_double(cal.C_single) << '\n';
  os << "C_two=" << detail::fmt_double(cal.C_two) << '\n';
  os << "C_emb=" << detail::fmt_double(cfg.constants.C_emb) << '\n';
  os << "polylog_exp=" << detail::fmt_double(cfg.constants.polylog_exp) << '\n';
  os << "C_stage1=" << detail::fmt_double(cfg.constants.C_stage1) << '\n';
  os << "stage1_eps_exp=" << detail::fmt_double(cfg.constants.stage1_eps_exp) << '\n';
}

// key=value config files; '#' starts a comment, errors carry file:line
inline void apply_config_line(ExperimentConfig& cfg, const std::string& key,
                              const std::string& value, const std::string& where) {
  try {
    if (key == "problem") cfg.problem = problem_from_name(value);
    else if (key == "pipeline") cfg.pipeline = pipeline_from_name(value);
    else if (key == "p") cfg.p = std::stod(value);
    else if (key == "eps") cfg.eps = std::stod(value);
    else if (key == "n") cfg.n = std::stol(value);
    else if (key == "d") cfg.d = std::stol(value);
    else if (key == "trials") cfg.trials = std::stoi(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "f") cfg.f_name = value;
    else if (key == "out") cfg.out_path = value;
    else if (key == "timing") cfg.timing = value == "1" || value == "true";
    else if (key == "C_single") cfg.constants.C_single = std::stod(value);
    else if (key == "C_two") cfg.constants.C_two = std::stod(value);
    else if (key == "C_emb") cfg.constants.C_emb = std::stod(value);
    else if (key == "polylog_exp") cfg.constants.polylog_exp = std::stod(value);
    else if (key == "C_stage1") cfg.constants.C_stage1 = std::stod(value);
    else if (key == "stage1_eps_exp") cfg.constants.stage1_eps_exp = std::stod(value);
    else if (key == "budgets") {
      cfg.budgets.clear();
      std::stringstream ss(value);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) cfg.budgets.push_back(std::stol(tok));
    } else {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError(where + ": bad value '" + value + "' for key '" + key + "'");
  }
}

inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string where = path + ":" + std::to_string(lineno);
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t\r");
      auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    apply_config_line(cfg, key, value, where);
  }
}

}  // namespace actreg
