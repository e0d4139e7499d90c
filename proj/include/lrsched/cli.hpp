// Copyright 2026 The lrsched Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file cli.hpp
/// `lrsched run|sweep|oracle|compare|verify`.
///
/// Exit codes: 0 success, 1 verification failure, 2 usage, configuration or
/// I/O error.

#pragma once

#include "lrsched/experiment.hpp"
#include "lrsched/sweep.hpp"
#include "lrsched/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace lrsched {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;

namespace cli_detail {

struct CommonFlags {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

inline void add_common(CLI::App& cmd, CommonFlags& f, bool config_required) {
  auto* c = cmd.add_option("--config", f.config, "JSON config file");
  if (config_required) c->required();
  cmd.add_option("--out", f.out, "output directory")->capture_default_str();
  cmd.add_option("--seed", f.seed, "override the config seed");
  cmd.add_flag("--quiet", f.quiet, "no progress output");
}

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

inline void print_summary(const Summary& s, std::ostream& out) {
  out << "steps " << s.steps_executed << (s.diverged ? " (diverged: " + s.diagnostic + ")" : "")
      << (s.early_stopped ? " (early stop)" : "") << (s.truncated ? " (truncated)" : "") << '\n'
      << "final eta " << fmt(s.final_eta) << ", train loss " << fmt(s.final_train_loss) << ", val loss "
      << fmt(s.final_val_loss);
  if (!std::isnan(s.final_val_accuracy)) out << ", val acc " << fmt(s.final_val_accuracy);
  out << '\n';
}

inline ExperimentConfig load_with_seed(const CommonFlags& f) {
  ExperimentConfig cfg = load_experiment_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  return cfg;
}

inline int cmd_run(const CommonFlags& f, std::ostream& out) {
  const ExperimentConfig cfg = load_with_seed(f);
  const std::filesystem::path dir(f.out);
  const ExperimentResult r = run_experiment(cfg);
  emit_trace_csv(r.trace, dir / "trace.csv");
  emit_summary_json(r.summary, cfg, dir / "summary.json");
  if (!f.quiet) print_summary(r.summary, out);
  return kExitOk;
}

inline int cmd_sweep(const CommonFlags& f, std::ostream& out) {
  SweepConfig sweep = load_sweep_config(f.config);
  if (f.seed) sweep.master_seed = *f.seed;
  const std::filesystem::path dir(f.out);
  const SweepReport report = random_sweep(sweep, [&](const TrialResult& t) {
    if (f.quiet) return;
    out << "trial " << t.index << ' ' << t.draw.scheduler << " beta " << fmt(t.draw.beta) << " mu "
        << fmt(t.draw.mu) << " gamma " << fmt(t.draw.gamma) << " -> score " << fmt(t.score)
        << (t.diverged ? " diverged" : "") << (t.early_stopped ? " early-stop" : "")
        << (t.truncated ? " truncated" : "") << '\n';
  });
  emit_trials_csv(report, dir / "trials.csv");
  emit_best_so_far_csv(report, dir / "best_so_far.csv");
  write_json(sweep_summary_json(report, sweep), dir / "sweep_summary.json");
  if (!f.quiet) out << report.trials.size() << " trials in " << fmt(report.elapsed_s) << " s\n";
  return kExitOk;
}

inline int cmd_oracle(const CommonFlags& f, std::ostream& out) {
  const ExperimentConfig cfg = load_with_seed(f);
  const std::filesystem::path dir(f.out);
  const Problem problem = build_problem(cfg);
  const LrsOptRun run = run_lrs_opt(problem, [&](std::size_t k, double value) {
    if (!f.quiet && (k % 50 == 0 || k + 1 == cfg.lrs_opt.outer_iterations))
      out << "iteration " << k << " f_T " << fmt(value) << '\n';
  });
  emit_schedule_csv(run.optimization.schedule, dir / "schedule.csv");
  emit_history_csv(run.optimization.history, dir / "history.csv");
  emit_trace_csv(run.evaluation.trace, dir / "trace.csv");
  Json summary = summary_json(run.evaluation.summary, cfg);
  summary["lrs_opt_skipped"] = run.optimization.skipped;
  summary["lrs_opt_final_hyper_lr"] = run.optimization.final_hyper_lr;
  write_json(summary, dir / "summary.json");
  if (!f.quiet) {
    if (run.optimization.skipped > 0)
      out << run.optimization.skipped << " outer iterations skipped, hyper_lr now "
          << fmt(run.optimization.final_hyper_lr) << '\n';
    print_summary(run.evaluation.summary, out);
  }
  return kExitOk;
}

inline int cmd_compare(const CommonFlags& f, std::ostream& out) {
  const ExperimentConfig cfg = load_with_seed(f);
  const std::filesystem::path dir(f.out);
  const auto rows = run_compare(cfg);
  emit_compare_csv(rows, dir / "compare.csv");
  if (!f.quiet) {
    for (const auto& r : rows)
      out << r.method << (r.method == "marthe" ? "(mu=" + fmt(r.mu) + ")" : "") << " beta " << fmt(r.beta)
          << " best " << fmt(r.best_objective) << (r.diverged ? " diverged" : "") << '\n';
  }
  return kExitOk;
}

inline int cmd_verify(const CommonFlags& f, double tolerance_scale, std::ostream& out) {
  VerifyOptions options;
  options.tolerance_scale = tolerance_scale;
  if (f.seed) options.seed = *f.seed;
  const auto results = run_verification(options, [&](const CheckResult& r) {
    if (f.quiet && r.passed) return;
    char line[256];
    std::snprintf(line, sizeof(line), "%s  %-38s %.3g (tol %.3g)", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                  r.measured, r.tolerance);
    out << line;
    if (!r.passed && !r.detail.empty()) out << "  [" << r.detail << ']';
    out << '\n';
  });
  return all_passed(results) ? kExitOk : kExitVerifyFailed;
}

}  // namespace cli_detail

/// Entry point of the `lrsched` binary; output streams are parameters so
/// tests can capture them.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"Learning-rate schedules from hypergradients", "lrsched"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonFlags run_f, sweep_f, oracle_f, compare_f, verify_f;
  double tolerance_scale = 1.0;
  auto* run = app.add_subcommand("run", "run one experiment");
  add_common(*run, run_f, true);
  auto* sweep = app.add_subcommand("sweep", "random search under a time budget");
  add_common(*sweep, sweep_f, true);
  auto* oracle = app.add_subcommand("oracle", "optimize the whole schedule offline (LRS-OPT)");
  add_common(*oracle, oracle_f, true);
  auto* compare = app.add_subcommand("compare", "best objective per (method, beta) on a test function");
  add_common(*compare, compare_f, true);
  auto* verify = app.add_subcommand("verify", "finite-difference and identity checks");
  add_common(*verify, verify_f, false);
  verify->add_option("--tolerance-scale", tolerance_scale, "multiply every tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_f, out);
    if (*sweep) return cmd_sweep(sweep_f, out);
    if (*oracle) return cmd_oracle(oracle_f, out);
    if (*compare) return cmd_compare(compare_f, out);
    return cmd_verify(verify_f, tolerance_scale, out);
  } catch (const ConfigError& e) {
    err << "invalid configuration:\n";
    for (const auto& issue : e.issues()) err << "  " << issue << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace lrsched
