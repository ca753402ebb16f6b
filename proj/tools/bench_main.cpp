// bench: build planted or hard-instance problems, run the sampling pipelines
// across query budgets and seeds, and emit CSV reports.
//
//   bench run --problem planted-relu --pipeline single --budgets 400,800 --out r.csv
//   bench calibrate --target 0.75 --out defaults.cfg
//
// A key=value file given via --config is applied first; explicit flags
// override it.  Exit code 0 iff the run (and any --require-pass assertion)
// succeeds.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "actreg/bench.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::string problem;
  std::string pipeline;
  std::string f_name;
  std::string out;
  std::string budgets;
  double p = 0.0;
  double eps = 0.0;
  long n = 0;
  long d = 0;
  int trials = 0;
  unsigned long long seed = 0;
  bool timing = false;
  double C_single = 0.0, C_two = 0.0, C_emb = 0.0;
  double polylog_exp = 0.0, C_stage1 = 0.0, stage1_eps_exp = 0.0;
};

void register_common(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config, "key=value config file, applied before explicit flags");
  sub->add_option("--problem", o.problem,
                  "planted-relu|planted-identity|hard-small-p|hard-large-p");
  sub->add_option("--pipeline", o.pipeline, "single|two-stage|direct");
  sub->add_option("--p", o.p, "norm exponent, >= 1");
  sub->add_option("--eps", o.eps, "target accuracy in (0, 1)");
  sub->add_option("--n", o.n, "rows for planted problems");
  sub->add_option("--d", o.d, "columns (planted) / blocks (hard)");
  sub->add_option("--budgets", o.budgets, "comma-separated query budgets");
  sub->add_option("--trials", o.trials, "trials per budget");
  sub->add_option("--seed", o.seed, "base seed; per-trial seeds derive from it");
  sub->add_option("--f", o.f_name, "identity|relu|clip|lb-small|lb-large");
  sub->add_option("--out", o.out, "output path (CSV for run, defaults file for calibrate)");
  sub->add_flag("--timing", o.timing, "record wall-clock per trial (CSV no longer byte-stable)");
  sub->add_option("--C_single", o.C_single, "single-stage rate constant");
  sub->add_option("--C_two", o.C_two, "two-stage rate constant");
  sub->add_option("--C_emb", o.C_emb, "embedding rate constant");
  sub->add_option("--polylog_exp", o.polylog_exp, "single-stage log exponent");
  sub->add_option("--C_stage1", o.C_stage1, "stage-1 size constant");
  sub->add_option("--stage1_eps_exp", o.stage1_eps_exp, "stage-1 eps exponent");
}

actreg::ExperimentConfig build_config(CLI::App* sub, const CommonOpts& o) {
  actreg::ExperimentConfig cfg;
  if (sub->count("--config") > 0) actreg::load_config_file(cfg, o.config);
  auto given = [&](const char* flag) { return sub->count(flag) > 0; };
  if (given("--problem")) cfg.problem = actreg::problem_from_name(o.problem);
  if (given("--pipeline")) cfg.pipeline = actreg::pipeline_from_name(o.pipeline);
  if (given("--p")) cfg.p = o.p;
  if (given("--eps")) cfg.eps = o.eps;
  if (given("--n")) cfg.n = o.n;
  if (given("--d")) cfg.d = o.d;
  if (given("--budgets")) actreg::apply_config_line(cfg, "budgets", o.budgets, "--budgets");
  if (given("--trials")) cfg.trials = o.trials;
  if (given("--seed")) cfg.seed = o.seed;
  if (given("--f")) cfg.f_name = o.f_name;
  if (given("--out")) cfg.out_path = o.out;
  if (given("--timing")) cfg.timing = o.timing;
  if (given("--C_single")) cfg.constants.C_single = o.C_single;
  if (given("--C_two")) cfg.constants.C_two = o.C_two;
  if (given("--C_emb")) cfg.constants.C_emb = o.C_emb;
  if (given("--polylog_exp")) cfg.constants.polylog_exp = o.polylog_exp;
  if (given("--C_stage1")) cfg.constants.C_stage1 = o.C_stage1;
  if (given("--stage1_eps_exp")) cfg.constants.stage1_eps_exp = o.stage1_eps_exp;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"active lp regression benchmark harness"};
  app.require_subcommand(1);

  CommonOpts run_opts;
  CLI::App* run_cmd = app.add_subcommand("run", "run pipelines across budgets, emit CSV");
  register_common(run_cmd, run_opts);
  double require_pass = -1.0;
  run_cmd->add_option("--require-pass", require_pass,
                      "fail unless every budget reaches this guarantee pass rate");

  CommonOpts cal_opts;
  CLI::App* cal_cmd =
      app.add_subcommand("calibrate", "search the smallest rate constants hitting a pass rate");
  register_common(cal_cmd, cal_opts);
  double target = 0.75;
  cal_cmd->add_option("--target", target, "guarantee pass rate to calibrate for");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      actreg::ExperimentConfig cfg = build_config(run_cmd, run_opts);
      if (cfg.budgets.empty()) cfg.budgets.push_back(actreg::default_budget(cfg));
      actreg::ExperimentResult res = actreg::run_experiment(cfg);
      for (const actreg::BudgetSummary& s : res.summaries)
        std::printf("budget=%ld median_ratio=%.6g pass_rate=%.3f mean_queries=%.1f\n", s.budget,
                    s.median_ratio, s.pass_rate, s.mean_queries);
      if (!cfg.out_path.empty()) std::printf("csv: %s\n", cfg.out_path.c_str());
      if (require_pass >= 0.0)
        for (const actreg::BudgetSummary& s : res.summaries)
          if (s.pass_rate < require_pass) {
            std::fprintf(stderr, "assertion failed: budget %ld pass rate %.3f < %.3f\n",
                         s.budget, s.pass_rate, require_pass);
            return 1;
          }
    } else {
      actreg::ExperimentConfig cfg = build_config(cal_cmd, cal_opts);
      if (cfg.budgets.empty()) cfg.budgets.push_back(1);  // unused by calibration
      actreg::CalibrationResult cal = actreg::calibrate_constants(cfg, target);
      std::printf("C_single=%.17g\nC_two=%.17g\n", cal.C_single, cal.C_two);
      if (!cal_opts.out.empty()) {
        actreg::write_defaults_file(cal, cfg, cal_opts.out);
        std::printf("defaults: %s\n", cal_opts.out.c_str());
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
