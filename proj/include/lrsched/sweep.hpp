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

/// @file sweep.hpp
/// Random search over scheduler hyper-hyperparameters under a wall-clock
/// budget, with per-epoch early stopping inside each trial.

#pragma once

#include "lrsched/experiment.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace lrsched {

/// Hyper-hyperparameters for one trial. All three are drawn for every trial
/// so the draw sequence does not depend on which schedulers are listed.
struct TrialDraw {
  std::string scheduler;
  std::uint64_t seed = 0;
  double beta = 0.0;
  double mu = 0.0;
  double gamma = 1.0;
  bool operator==(const TrialDraw&) const = default;
};

struct TrialResult {
  std::size_t index = 0;
  TrialDraw draw;
  double score = kNaN;  // best validation accuracy, or minus best validation loss without labels
  double best_val_accuracy = kNaN;
  double best_val_loss = kNaN;
  std::optional<double> test_accuracy;
  std::size_t steps = 0;
  bool diverged = false;
  bool early_stopped = false;
  bool truncated = false;
  double started_s = 0.0;
  double finished_s = 0.0;
};

struct BestSoFar {
  double elapsed_s = 0.0;
  std::size_t trial = 0;
  double score = kNaN;
  std::optional<double> test_accuracy;  // of the best-validation model
};

struct SweepReport {
  std::vector<TrialResult> trials;
  std::vector<BestSoFar> best_so_far;  // one entry per trial
  std::optional<std::size_t> best_trial;
  double elapsed_s = 0.0;
};

namespace detail {

inline double log_uniform(RngStream& rng, const std::array<double, 2>& range) {
  if (range[0] == range[1]) return range[0];
  return std::exp(rng.uniform(std::log(range[0]), std::log(range[1])));
}

inline double plain_uniform(RngStream& rng, const std::array<double, 2>& range) {
  if (range[0] == range[1]) return range[0];
  return rng.uniform(range[0], range[1]);
}

}  // namespace detail

/// Trial k's draw. Depends only on (master_seed, k) and the config.
inline TrialDraw draw_trial(const SweepConfig& sweep, std::size_t k) {
  RngStream rng(sweep.master_seed, "sweep/trial/" + std::to_string(k));
  TrialDraw d;
  const std::size_t s = sweep.schedulers.size();
  d.scheduler = sweep.schedulers[k % s];
  d.seed = sweep.seeds[(k / s) % sweep.seeds.size()];
  d.beta = detail::log_uniform(rng, sweep.beta_range);
  d.mu = detail::plain_uniform(rng, sweep.mu_range);
  d.gamma = detail::log_uniform(rng, sweep.gamma_range);
  return d;
}

inline ExperimentConfig trial_config(const SweepConfig& sweep, const TrialDraw& d) {
  ExperimentConfig cfg = sweep.base;
  cfg.seed = d.seed;
  cfg.patience_epochs = sweep.patience_epochs;
  cfg.scheduler.kind = d.scheduler;
  cfg.scheduler.beta = d.beta;
  cfg.scheduler.mu = d.mu;
  cfg.scheduler.gamma = d.gamma;
  return cfg;
}

/// Trials run one after another until the budget is spent (or max_trials
/// is reached). The first trial always starts; it is truncated at the
/// deadline if needed.
inline SweepReport random_sweep(const SweepConfig& sweep,
                                const std::function<void(const TrialResult&)>& on_trial = {}) {
  const auto started = Clock::now();
  const auto deadline =
      started + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(sweep.time_budget_s));
  auto seconds_since_start = [&] { return std::chrono::duration<double>(Clock::now() - started).count(); };

  SweepReport report;
  for (std::size_t k = 0;; ++k) {
    if (sweep.max_trials > 0 && k >= sweep.max_trials) break;
    if (k > 0 && Clock::now() >= deadline) break;

    TrialResult trial;
    trial.index = k;
    trial.draw = draw_trial(sweep, k);
    trial.started_s = seconds_since_start();
    RunOptions options;
    options.deadline = deadline;
    const ExperimentResult r = run_experiment(trial_config(sweep, trial.draw), options);
    const Summary& s = r.summary;
    trial.finished_s = seconds_since_start();
    trial.best_val_accuracy = s.best_val_accuracy;
    trial.best_val_loss = s.best_val_loss;
    trial.test_accuracy = s.test_accuracy;
    trial.steps = s.steps_executed;
    trial.diverged = s.diverged;
    trial.early_stopped = s.early_stopped;
    trial.truncated = s.truncated;
    trial.score = !std::isnan(s.best_val_accuracy) ? s.best_val_accuracy : -s.best_val_loss;

    BestSoFar best = report.best_so_far.empty() ? BestSoFar{} : report.best_so_far.back();
    best.elapsed_s = trial.finished_s;
    if (!std::isnan(trial.score) && (std::isnan(best.score) || trial.score > best.score)) {
      best.score = trial.score;
      best.trial = k;
      best.test_accuracy = trial.test_accuracy;
      report.best_trial = k;
    }
    report.best_so_far.push_back(best);
    report.trials.push_back(trial);
    if (on_trial) on_trial(trial);
  }
  report.elapsed_s = seconds_since_start();
  return report;
}

inline void emit_trials_csv(const SweepReport& report, const std::filesystem::path& path) {
  using detail::format_double;
  auto out = open_output(path);
  out << "trial,scheduler,seed,beta,mu,gamma,score,best_val_accuracy,best_val_loss,test_accuracy,steps,diverged,"
         "early_stopped,truncated,started_s,finished_s\n";
  for (const auto& t : report.trials)
    out << t.index << ',' << t.draw.scheduler << ',' << t.draw.seed << ',' << format_double(t.draw.beta) << ','
        << format_double(t.draw.mu) << ',' << format_double(t.draw.gamma) << ',' << format_double(t.score) << ','
        << format_double(t.best_val_accuracy) << ',' << format_double(t.best_val_loss) << ','
        << format_double(t.test_accuracy.value_or(kNaN)) << ',' << t.steps << ',' << int(t.diverged) << ','
        << int(t.early_stopped) << ',' << int(t.truncated) << ',' << format_double(t.started_s) << ','
        << format_double(t.finished_s) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

inline void emit_best_so_far_csv(const SweepReport& report, const std::filesystem::path& path) {
  using detail::format_double;
  auto out = open_output(path);
  out << "elapsed_s,trial,best_score,test_accuracy\n";
  for (const auto& b : report.best_so_far)
    out << format_double(b.elapsed_s) << ',' << b.trial << ',' << format_double(b.score) << ','
        << format_double(b.test_accuracy.value_or(kNaN)) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

inline Json sweep_summary_json(const SweepReport& report, const SweepConfig& sweep) {
  Json j;
  j["version"] = kVersion;
  j["trials"] = report.trials.size();
  j["elapsed_s"] = report.elapsed_s;
  j["master_seed"] = sweep.master_seed;
  if (report.best_trial) {
    const TrialResult& b = report.trials[*report.best_trial];
    j["best_trial"] = b.index;
    j["best_scheduler"] = b.draw.scheduler;
    j["best_beta"] = b.draw.beta;
    j["best_mu"] = b.draw.mu;
    j["best_gamma"] = b.draw.gamma;
    j["best_score"] = detail::number_or_null(b.score);
    j["test_accuracy"] = b.test_accuracy ? Json(*b.test_accuracy) : Json(nullptr);
  } else {
    j["best_trial"] = nullptr;
    j["test_accuracy"] = nullptr;
  }
  return j;
}

}  // namespace lrsched
