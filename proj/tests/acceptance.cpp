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

// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all nine)

#include "lrsched/lrsched.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#ifndef LRSCHED_CLI_PATH
#define LRSCHED_CLI_PATH "lrsched"
#endif

namespace {

using namespace lrsched;
namespace fs = std::filesystem;

constexpr double kInfinityD = std::numeric_limits<double>::infinity();

struct Outcome {
  bool passed;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, x);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Criteria 1-4 share the checks behind `lrsched verify`.
Outcome from_checks(const std::vector<CheckResult>& checks, double seconds, double budget_s) {
  Outcome o{seconds < budget_s, ""};
  for (const auto& c : checks) {
    o.passed = o.passed && c.passed;
    o.detail += c.name + " " + fmt("%.2g", c.measured) + (c.passed ? "; " : " FAILED; ");
  }
  o.detail += fmt("%.2f s", seconds);
  return o;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  auto checks = check_hypergradient_exactness(0);
  for (auto& c : checks) c.passed = c.measured <= c.tolerance;
  return from_checks(checks, seconds_since(t0), 5.0);
}

Outcome criterion2() {
  auto c = check_hand_instance();
  c.passed = c.measured <= c.tolerance;
  return from_checks({c}, 0.0, 1.0);
}

Outcome criterion3() {
  const auto t0 = Clock::now();
  std::vector<CheckResult> checks = {check_hd_identity(), check_rtho_identity(), check_s_k_mu(0)};
  for (auto& c : checks) c.passed = c.measured <= c.tolerance;
  return from_checks(checks, seconds_since(t0), 10.0);
}

Outcome criterion4() {
  const auto t0 = Clock::now();
  auto checks = check_dynamics_jacobians(0);
  for (auto& c : checks) c.passed = c.measured <= c.tolerance;
  return from_checks(checks, seconds_since(t0), 10.0);
}

// Beale, 500 plain gradient steps, E = L.
Outcome criterion5() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.problem.kind = "beale";
  cfg.problem.w0 = {-0.5, 2.5};
  cfg.horizon = 500;
  cfg.scheduler.eta0 = 0.01;
  cfg.compare.beta_min = 1e-8;
  cfg.compare.beta_max = 1e-1;
  cfg.compare.beta_count = 16;
  cfg.compare.mus = {};
  const auto rows = run_compare(cfg);
  const std::size_t n = cfg.compare.beta_count;
  std::size_t usable = 0, wins = 0;
  double hd_min = kInfinityD, rtho_min = kInfinityD;
  for (std::size_t i = 0; i < n; ++i) {
    const CompareRow& hd = rows[i];
    const CompareRow& rtho = rows[n + i];
    if (hd.diverged || rtho.diverged) continue;
    ++usable;
    wins += rtho.best_objective < hd.best_objective ? 1 : 0;
    hd_min = std::min(hd_min, hd.best_objective);
    rtho_min = std::min(rtho_min, rtho.best_objective);
  }
  const double seconds = seconds_since(t0);
  const bool ok = usable > 0 && wins * 10 >= usable * 9 && rtho_min < hd_min && seconds < 60.0;
  return {ok, std::to_string(wins) + "/" + std::to_string(usable) + " non-divergent betas favour RTHO; grid min RTHO " +
                  fmt("%.3g", rtho_min) + " vs HD " + fmt("%.3g", hd_min) + "; " + fmt("%.1f s", seconds)};
}

// Smoothed Bukin: RTHO's eta shoots up then vanishes, HD stays tame.
Outcome criterion6() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.problem.kind = "bukin";
  cfg.problem.eps = 1e-3;
  cfg.problem.w0 = {-5.0, 0.5};
  cfg.horizon = 500;
  cfg.scheduler.eta0 = 0.01;
  cfg.compare.beta_min = 1e-6;
  cfg.compare.beta_max = 1e-1;
  cfg.compare.beta_count = 11;
  const double eta0 = cfg.scheduler.eta0;
  std::string hits;
  for (double beta : cfg.compare.grid()) {
    cfg.scheduler.beta = beta;
    cfg.scheduler.kind = "rtho";
    const auto rtho = run_experiment(cfg);
    cfg.scheduler.kind = "hd";
    const auto hd = run_experiment(cfg);
    bool grew = false, vanished = false;
    for (const auto& r : rtho.trace) {
      grew = grew || r.eta >= 10.0 * eta0;
      vanished = vanished || (grew && r.eta == 0.0);
    }
    bool hd_tame = !hd.summary.diverged && hd.trace.size() == cfg.horizon;
    for (const auto& r : hd.trace) hd_tame = hd_tame && r.eta > 0.0 && r.eta < 10.0 * eta0;
    const bool no_worse = hd.summary.final_val_loss <= rtho.summary.final_val_loss;
    if (grew && vanished && hd_tame && no_worse) hits += (hits.empty() ? "" : ", ") + fmt("%.3g", beta);
  }
  const double seconds = seconds_since(t0);
  return {!hits.empty() && seconds < 60.0,
          (hits.empty() ? std::string("no beta qualifies") : "qualifying betas: " + hits) + "; " +
              fmt("%.1f s", seconds)};
}

// ---------------------------------------------------------------------------
// Criteria 7 and 8 share one set of runs.

struct MlpStudy {
  std::vector<double> betas = {1e-5, 3e-5, 1e-4, 3e-4, 1e-3};
  std::vector<double> baseline_acc;              // per seed
  std::vector<std::vector<double>> marthe_acc;   // [beta][seed]
  std::vector<std::vector<double>> marthe_loss;  // [beta][seed]
  std::vector<double> lrs_loss;                  // per seed
  std::vector<double> tail_ratio;                // per seed
  double seconds = 0.0;
};

ExperimentConfig mlp_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.problem.kind = "mlp";
  cfg.problem.hidden = {64, 64};
  cfg.problem.activation = "tanh";
  cfg.dataset.source = "blobs";
  cfg.dataset.n_train = 7000;
  cfg.dataset.n_val = 700;
  cfg.dataset.classes = 10;
  cfg.dataset.dim = 64;
  cfg.dataset.spread = 0.5;
  cfg.horizon = 512;
  cfg.batch_size = 100;
  cfg.scheduler.eta0 = 0.01;
  cfg.scheduler.mu = 0.99;
  cfg.eval_every = 512;
  cfg.seed = seed;
  cfg.lrs_opt.outer_iterations = 500;
  cfg.lrs_opt.hyper_lr = 1.0;
  return cfg;
}

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

const MlpStudy& mlp_study() {
  static const MlpStudy study = [] {
    const auto t0 = Clock::now();
    MlpStudy s;
    s.marthe_acc.assign(s.betas.size(), {});
    s.marthe_loss.assign(s.betas.size(), {});
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      ExperimentConfig cfg = mlp_config(seed);
      const Problem problem = build_problem(cfg);
      Problem p = problem;
      p.config.scheduler.kind = "constant";
      s.baseline_acc.push_back(run_problem(p).summary.final_val_accuracy);
      for (std::size_t b = 0; b < s.betas.size(); ++b) {
        p.config.scheduler.kind = "marthe";
        p.config.scheduler.beta = s.betas[b];
        const Summary r = run_problem(p).summary;
        s.marthe_acc[b].push_back(r.diverged ? 0.0 : r.final_val_accuracy);
        s.marthe_loss[b].push_back(r.diverged ? kInfinityD : r.final_val_loss);
      }
      const LrsOptRun lrs = run_lrs_opt(problem);
      s.lrs_loss.push_back(lrs.evaluation.summary.diverged ? kInfinityD : lrs.evaluation.summary.final_val_loss);
      const Vector& eta = lrs.optimization.schedule;
      const Eigen::Index T = eta.size();
      const double tail = eta.tail(T / 20).mean();
      const double mid = eta.segment(T / 2, T * 9 / 10 - T / 2).mean();
      s.tail_ratio.push_back(tail / mid);
    }
    s.seconds = seconds_since(t0);
    return s;
  }();
  return study;
}

Outcome criterion7() {
  const MlpStudy& s = mlp_study();
  const double base = mean(s.baseline_acc);
  std::size_t best = 0;
  double best_loss = kInfinityD;
  for (std::size_t b = 0; b < s.betas.size(); ++b) {
    if (mean(s.marthe_acc[b]) > mean(s.marthe_acc[best])) best = b;
    best_loss = std::min(best_loss, mean(s.marthe_loss[b]));
  }
  const double acc = mean(s.marthe_acc[best]);
  const double lrs = mean(s.lrs_loss);
  const bool ok = acc >= base + 0.01 && lrs <= best_loss && s.seconds < 900.0;
  return {ok, "baseline acc " + fmt("%.4f", base) + ", MARTHE acc " + fmt("%.4f", acc) + " (beta " +
                  fmt("%.0e", s.betas[best]) + "); val loss LRS-OPT " + fmt("%.4f", lrs) + " vs best MARTHE " +
                  fmt("%.4f", best_loss) + "; " + fmt("%.0f s", s.seconds)};
}

Outcome criterion8() {
  const MlpStudy& s = mlp_study();
  int ok = 0;
  std::string ratios;
  for (double r : s.tail_ratio) {
    ok += r < 0.5 ? 1 : 0;
    ratios += (ratios.empty() ? "" : " ") + fmt("%.3f", r);
  }
  return {ok >= 3, std::to_string(ok) + "/4 seeds with tail/mid ratio < 0.5 (" + ratios + ")"};
}

// ---------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + LRSCHED_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion9() {
  const fs::path dir = fs::temp_directory_path() / ("lrsched_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  ExperimentConfig cfg = mlp_config(3);
  cfg.dataset.n_train = 1000;
  cfg.dataset.n_val = 200;
  cfg.horizon = 60;
  cfg.eval_every = 10;
  cfg.scheduler.beta = 1e-4;
  std::ofstream(dir / "run.json") << to_json(cfg).dump(2);
  const std::string config = "--config \"" + (dir / "run.json").string() + "\"";
  const int a = run_cli("run " + config + " --out \"" + (dir / "a").string() + "\" --quiet");
  const int b = run_cli("run " + config + " --out \"" + (dir / "b").string() + "\" --quiet");
  const std::string ta = slurp(dir / "a" / "trace.csv");
  const bool identical = a == 0 && b == 0 && !ta.empty() && ta == slurp(dir / "b" / "trace.csv");
  const int verify_ok = run_cli("verify --quiet");
  const int verify_tight = run_cli("verify --quiet --tolerance-scale 1e-30");
  std::error_code ec;
  fs::remove_all(dir, ec);
  return {identical && verify_ok == 0 && verify_tight == 1,
          std::string(identical ? "trace CSV byte-identical" : "trace CSV differs or run failed") +
              "; verify exit " + std::to_string(verify_ok) + ", tightened verify exit " +
              std::to_string(verify_tight)};
}

}  // namespace

int main(int argc, char** argv) {
  using Criterion = Outcome (*)();
  const Criterion criteria[] = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                criterion6, criterion7, criterion8, criterion9};
  const char* names[] = {"hypergradient exactness",
                         "hand-computed oracle instance",
                         "specialization identities",
                         "dynamics JVP correctness",
                         "Beale: RTHO beats HD",
                         "smoothed Bukin: RTHO eta vanishes, HD stays tame",
                         "MLP trend: MARTHE over baseline, LRS-OPT over MARTHE",
                         "LRS-OPT schedule decays at the end",
                         "determinism and verify exit codes"};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  bool all = true;
  for (int k = 1; k <= 9; ++k) {
    if (!selected.empty() && !selected.count(k)) continue;
    Outcome o;
    try {
      o = criteria[k - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.passed;
    std::printf("%s criterion %d: %s: %s\n", o.passed ? "PASS" : "FAIL", k, names[k - 1], o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
