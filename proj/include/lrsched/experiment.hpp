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

/// @file experiment.hpp
/// Experiment driver: builds the problem described by an ExperimentConfig,
/// runs a scheduler for T steps and records one TraceRecord per step.
/// Also hosts the beta-grid comparison and the LRS-OPT driver used by the
/// CLI.

#pragma once

#include "lrsched/config.hpp"
#include "lrsched/mlp.hpp"
#include "lrsched/oracle.hpp"
#include "lrsched/problems.hpp"
#include "lrsched/schedulers.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#ifndef LRSCHED_VERSION_STRING
#define LRSCHED_VERSION_STRING "0.1.0"
#endif

namespace lrsched {

inline constexpr const char* kVersion = LRSCHED_VERSION_STRING;
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// Problem construction

/// Everything a run needs, derived deterministically from the config.
struct Problem {
  ExperimentConfig config;
  ObjectivePtr objective;  // training loss L
  DynamicsPtr dynamics;
  OptimizerState s0;
  DatasetPtr train, val, test;  // null for analytic test functions
  BoundObjective validation;    // E
  std::optional<BoundObjective> test_target;
  std::size_t epoch_steps = 50;

  bool stochastic() const { return train != nullptr; }

  /// Training batches for one run; a fresh sampler seeded from `label`.
  BatchStream train_batches(const std::string& label = "train") const {
    if (!stochastic()) return full_objective_batches();
    auto sampler = std::make_shared<BatchSampler>(train->size(), config.batch_size,
                                                  RngStream(config.seed, label),
                                                  config.sampling == "epoch_shuffle" ? SamplingPolicy::kEpochShuffle
                                                                                     : SamplingPolicy::kWithReplacement);
    return sampled_batches(std::move(sampler), train);
  }

  ValGradSource val_grad_source() const {
    if (config.val_grad_mode == "minibatch")
      return ValGradSource::minibatch(validation.objective, val,
                                      BatchSampler(val->size(), config.val_batch_size, RngStream(config.seed, "val")));
    return ValGradSource::full(validation);
  }
};

inline Vector to_vector(const std::vector<double>& xs) {
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

namespace detail {

inline DynamicsPtr make_dynamics(const DynamicsConfig& d, ObjectivePtr obj, const std::optional<double>& clip) {
  DynamicsPtr dyn;
  if (d.kind == "sgd") dyn = sgd_dynamics(std::move(obj));
  else if (d.kind == "sgdm") dyn = sgdm_dynamics(std::move(obj), d.momentum);
  else dyn = adam_dynamics(std::move(obj), d.beta1, d.beta2, d.eps);
  if (clip) dyn = clipped_dynamics(*dyn, *clip);
  return dyn;
}

struct Splits {
  Dataset train, val, test;
  bool has_test = false;
};

inline Splits load_splits(const ExperimentConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  RngStream rng(cfg.seed, "data");
  Splits s;
  if (d.source == "blobs") {
    const Dataset all = make_blobs(d.n_train + d.n_val + d.n_test, d.classes, d.dim, d.spread, rng.child("blobs"));
    auto parts = partition(all, {d.n_train, d.n_val, d.n_test}, rng.child("split"));
    s.train = std::move(parts[0]);
    s.val = std::move(parts[1]);
    s.test = std::move(parts[2]);
    s.has_test = d.n_test > 0;
  } else {
    const Dataset pool = load_idx_dataset(d.train_images, d.train_labels);
    auto parts = partition(pool, {d.n_train, d.n_val}, rng.child("split"));
    s.train = std::move(parts[0]);
    s.val = std::move(parts[1]);
    if (!d.test_images.empty()) {
      Dataset test = load_idx_dataset(d.test_images, d.test_labels);
      s.test = d.n_test > 0 ? partition(test, {d.n_test}, rng.child("test"))[0] : std::move(test);
      s.has_test = true;
    }
  }
  if (d.normalize) {
    const Dataset ref = s.train;
    normalize_mean_std(s.train, ref);
    normalize_mean_std(s.val, ref);
    if (s.has_test) normalize_mean_std(s.test, ref);
  }
  // Label spaces must agree across splits.
  const int classes = std::max({s.train.num_classes, s.val.num_classes, s.has_test ? s.test.num_classes : 0});
  s.train.num_classes = s.val.num_classes = s.test.num_classes = classes;
  return s;
}

}  // namespace detail

inline Problem build_problem(const ExperimentConfig& cfg) {
  Problem p;
  p.config = cfg;
  p.epoch_steps = cfg.epoch_steps;
  const ProblemConfig& pc = cfg.problem;
  Vector w0;
  if (pc.kind == "mlp") {
    auto splits = detail::load_splits(cfg);
    MlpSpec spec;
    spec.layer_sizes.push_back(splits.train.feature_dim());
    for (auto h : pc.hidden) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(static_cast<std::size_t>(splits.train.num_classes));
    spec.activation = parse_activation(pc.activation);
    spec.weight_decay = pc.weight_decay;
    auto mlp = mlp_objective(spec);
    w0 = mlp->initial_weights(RngStream(cfg.seed, "init"));
    p.objective = mlp;
    p.train = std::make_shared<const Dataset>(std::move(splits.train));
    p.val = std::make_shared<const Dataset>(std::move(splits.val));
    p.validation = BoundObjective{mlp, Batch::all_of(p.val)};
    if (splits.has_test) {
      p.test = std::make_shared<const Dataset>(std::move(splits.test));
      p.test_target = BoundObjective{mlp, Batch::all_of(p.test)};
    }
    p.epoch_steps = std::max<std::size_t>(1, p.train->size() / cfg.batch_size);
  } else {
    if (pc.kind == "quadratic") {
      p.objective = quadratic_objective(to_vector(pc.diag));
      w0 = Vector::Ones(static_cast<Eigen::Index>(pc.diag.size()));
    } else if (pc.kind == "beale") {
      p.objective = beale_objective();
      w0 = Vector::Zero(2);
    } else {
      p.objective = bukin_smoothed_objective(pc.eps);
      w0 = Vector::Zero(2);
      w0 << -5.0, 0.5;
    }
    if (!pc.w0.empty()) w0 = to_vector(pc.w0);
    p.validation = BoundObjective{p.objective, {}};
  }
  p.dynamics = detail::make_dynamics(cfg.dynamics, p.objective, cfg.clip);
  p.s0 = p.dynamics->initial_state(w0);
  return p;
}

// ---------------------------------------------------------------------------
// Trace and summary

struct TraceRecord {
  std::size_t t = 0;
  double eta = 0.0;        // learning rate used for update t
  double delta_eta = 0.0;  // hypergradient estimate that produced eta (0 at t = 0)
  double train_loss = kNaN;  // L on the step's batch at w_t
  double val_loss = kNaN;    // E(w_{t+1}) at evaluation steps
  double val_acc = kNaN;
  double z_norm = 0.0;  // ||Z_{t+1}||
  double wall_ms = 0.0;
};

struct Summary {
  std::size_t steps_executed = 0;
  bool diverged = false;
  std::size_t last_finite_step = 0;
  std::string diagnostic;
  bool early_stopped = false;
  bool truncated = false;  // time budget reached
  double final_eta = kNaN;
  double max_eta = kNaN;
  double min_eta = kNaN;
  double final_train_loss = kNaN;
  double final_val_loss = kNaN;
  double final_val_accuracy = kNaN;
  double best_val_loss = kNaN;  // includes E(w_0)
  double best_val_accuracy = kNaN;
  std::size_t best_step = 0;  // weights index of the best validation accuracy (or loss)
  std::optional<double> test_accuracy;
  double wall_ms = 0.0;
};

struct ExperimentResult {
  std::vector<TraceRecord> trace;
  Summary summary;
  OptimizerState final_state;
};

namespace detail {

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace detail

inline constexpr const char* kTraceHeader = "t,eta,delta_eta,train_loss,val_loss,val_acc,z_norm,wall_ms";

inline void write_trace_csv(const std::vector<TraceRecord>& trace, std::ostream& out) {
  using detail::format_double;
  out << kTraceHeader << '\n';
  for (const auto& r : trace)
    out << r.t << ',' << format_double(r.eta) << ',' << format_double(r.delta_eta) << ','
        << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ',' << format_double(r.val_acc) << ','
        << format_double(r.z_norm) << ',' << format_double(r.wall_ms) << '\n';
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline void emit_trace_csv(const std::vector<TraceRecord>& trace, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_trace_csv(trace, out);
  if (!out) throw IoError("write failed for " + path.string());
}

inline Json summary_json(const Summary& s, const ExperimentConfig& cfg) {
  using detail::number_or_null;
  Json j;
  j["version"] = kVersion;
  j["config"] = to_json(cfg);
  j["steps_executed"] = s.steps_executed;
  j["diverged"] = s.diverged;
  j["last_finite_step"] = s.last_finite_step;
  j["diagnostic"] = s.diagnostic;
  j["early_stopped"] = s.early_stopped;
  j["truncated"] = s.truncated;
  j["final_eta"] = number_or_null(s.final_eta);
  j["max_eta"] = number_or_null(s.max_eta);
  j["min_eta"] = number_or_null(s.min_eta);
  j["final_train_loss"] = number_or_null(s.final_train_loss);
  j["final_val_loss"] = number_or_null(s.final_val_loss);
  j["final_val_accuracy"] = number_or_null(s.final_val_accuracy);
  j["best_val_loss"] = number_or_null(s.best_val_loss);
  j["best_val_accuracy"] = number_or_null(s.best_val_accuracy);
  j["best_step"] = s.best_step;
  j["test_accuracy"] = s.test_accuracy ? Json(*s.test_accuracy) : Json(nullptr);
  j["wall_ms"] = s.wall_ms;
  return j;
}

inline void write_json(const Json& j, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

inline void emit_summary_json(const Summary& s, const ExperimentConfig& cfg, const std::filesystem::path& path) {
  write_json(summary_json(s, cfg), path);
}

// ---------------------------------------------------------------------------
// Runs

struct RunOptions {
  std::function<void(const TraceRecord&)> on_record;
  std::optional<Clock::time_point> deadline;
  /// Explicit schedule; overrides the configured scheduler.
  std::optional<Vector> schedule;
};

namespace detail {

inline bool online_scheduler(const std::string& kind) { return kind == "marthe" || kind == "hd" || kind == "rtho"; }

inline double effective_mu(const SchedulerConfig& s) {
  if (s.kind == "hd") return 0.0;
  if (s.kind == "rtho") return 1.0;
  return s.mu;
}

}  // namespace detail

/// Runs the configured scheduler on an already built problem.
inline ExperimentResult run_problem(const Problem& problem, const RunOptions& options = {}) {
  const ExperimentConfig& cfg = problem.config;
  const Dynamics& dyn = *problem.dynamics;
  const Objective& train_obj = dyn.objective();
  const std::size_t horizon = options.schedule ? static_cast<std::size_t>(options.schedule->size()) : cfg.horizon;
  const bool online = !options.schedule && detail::online_scheduler(cfg.scheduler.kind);
  const auto started = Clock::now();
  auto elapsed_ms = [&] {
    return cfg.record_timing ? std::chrono::duration<double, std::milli>(Clock::now() - started).count() : 0.0;
  };

  ExperimentResult result;
  Summary& sum = result.summary;
  result.trace.reserve(horizon);
  BatchStream batches = problem.train_batches();
  ValGradSource val_grad = problem.val_grad_source();
  SchedulerState sched =
      SchedulerState::start(cfg.scheduler.eta0, cfg.scheduler.beta, detail::effective_mu(cfg.scheduler), dyn.state_dim());
  const ExponentialSchedule decay(std::max(cfg.scheduler.eta0, std::numeric_limits<double>::min()),
                                  cfg.scheduler.kind == "exponential" ? cfg.scheduler.gamma : 1.0);
  OptimizerState state = problem.s0;

  // Early stopping bookkeeping; the score is accuracy when available.
  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t evals_without_improvement = 0;
  auto evaluate = [&](const OptimizerState& s, std::size_t weights_index, bool epoch_end) {
    const double loss = problem.validation.loss(s.weights());
    const std::optional<double> acc = problem.validation.accuracy(s.weights());
    if (std::isnan(sum.best_val_loss) || loss < sum.best_val_loss) {
      sum.best_val_loss = loss;
      if (!acc) sum.best_step = weights_index;
    }
    if (acc && (std::isnan(sum.best_val_accuracy) || *acc > sum.best_val_accuracy)) {
      sum.best_val_accuracy = *acc;
      sum.best_step = weights_index;
      if (problem.test_target) sum.test_accuracy = problem.test_target->accuracy(s.weights());
    }
    if (epoch_end && cfg.patience_epochs > 0) {
      const double score = acc ? *acc : -loss;
      if (score > best_score) {
        best_score = score;
        evals_without_improvement = 0;
      } else if (++evals_without_improvement >= cfg.patience_epochs) {
        sum.early_stopped = true;
      }
    }
    return std::pair<double, double>{loss, acc.value_or(kNaN)};
  };

  try {
    const auto initial = evaluate(state, 0, false);
    (void)initial;
  } catch (const NumericError& e) {
    sum.diverged = true;
    sum.diagnostic = e.what();
  }

  for (std::size_t t = 0; t < horizon && !sum.diverged && !sum.early_stopped; ++t) {
    if (options.deadline && Clock::now() >= *options.deadline) {
      sum.truncated = true;
      break;
    }
    TraceRecord rec;
    rec.t = t;
    const Batch batch = batches(t);
    try {
      rec.train_loss = train_obj.loss(state.weights(), batch);
      if (online) {
        MartheStep out = marthe_step(sched, dyn, state, batch, val_grad);
        rec.eta = out.scheduler.eta;
        rec.delta_eta = t > 0 ? out.scheduler.last_delta : 0.0;
        if (out.diverged) {
          sum.diverged = true;
          sum.diagnostic = out.diagnostic;
        } else {
          sched = std::move(out.scheduler);
          state = std::move(out.state);
          rec.z_norm = sched.z.norm();
        }
      } else {
        rec.eta = options.schedule ? (*options.schedule)[static_cast<Eigen::Index>(t)]
                                   : (cfg.scheduler.eta0 == 0.0 ? 0.0 : decay(t));
        OptimizerState next = dyn.step(state, rec.eta, batch);
        if (!next.finite()) {
          sum.diverged = true;
          sum.diagnostic = "non-finite state after step " + std::to_string(t);
        } else {
          state = std::move(next);
        }
      }
      if (!sum.diverged) {
        const bool epoch_end = (t + 1) % problem.epoch_steps == 0;
        if ((t + 1) % cfg.eval_every == 0 || t + 1 == horizon || epoch_end) {
          const auto [loss, acc] = evaluate(state, t + 1, epoch_end);
          rec.val_loss = loss;
          rec.val_acc = acc;
        }
      }
    } catch (const NumericError& e) {
      sum.diverged = true;
      sum.diagnostic = e.what();
    }
    if (!std::isfinite(rec.eta)) {
      sum.diverged = true;
      if (sum.diagnostic.empty()) sum.diagnostic = "non-finite learning rate at step " + std::to_string(t);
    }
    rec.wall_ms = elapsed_ms();
    if (options.on_record) options.on_record(rec);
    result.trace.push_back(rec);
    if (!sum.diverged) sum.steps_executed = t + 1;
  }

  sum.last_finite_step = sum.steps_executed;
  if (!result.trace.empty()) {
    sum.final_eta = result.trace.back().eta;
    sum.final_train_loss = result.trace.back().train_loss;
    sum.max_eta = sum.min_eta = result.trace.front().eta;
    for (const auto& r : result.trace) {
      sum.max_eta = std::max(sum.max_eta, r.eta);
      sum.min_eta = std::min(sum.min_eta, r.eta);
    }
  }
  if (!sum.diverged) {
    try {
      sum.final_val_loss = problem.validation.loss(state.weights());
      sum.final_val_accuracy = problem.validation.accuracy(state.weights()).value_or(kNaN);
    } catch (const NumericError&) {
    }
  }
  sum.wall_ms = elapsed_ms();
  result.final_state = std::move(state);
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {}) {
  return run_problem(build_problem(cfg), options);
}

// ---------------------------------------------------------------------------
// Beta-grid comparison of online schedulers

struct CompareRow {
  std::string method;  // hd | rtho | marthe
  double mu = 0.0;
  double beta = 0.0;
  double best_objective = kNaN;  // min over E(w_0..w_T) before any divergence
  double final_objective = kNaN;
  double final_eta = kNaN;
  double max_eta = kNaN;
  bool eta_hit_zero = false;
  bool diverged = false;
  std::size_t steps = 0;
};

inline std::vector<CompareRow> run_compare(const ExperimentConfig& base) {
  struct Method {
    std::string name;
    double mu;
  };
  std::vector<Method> methods = {{"hd", 0.0}, {"rtho", 1.0}};
  for (double mu : base.compare.mus) methods.push_back({"marthe", mu});
  const Problem problem = build_problem(base);
  std::vector<CompareRow> rows;
  for (const auto& m : methods) {
    for (double beta : base.compare.grid()) {
      Problem p = problem;
      p.config.scheduler.kind = m.name;
      p.config.scheduler.mu = m.mu;
      p.config.scheduler.beta = beta;
      p.config.eval_every = 1;
      const ExperimentResult r = run_problem(p);
      CompareRow row{m.name, m.mu, beta};
      row.best_objective = r.summary.best_val_loss;
      row.final_objective = r.summary.final_val_loss;
      row.final_eta = r.summary.final_eta;
      row.max_eta = r.summary.max_eta;
      row.diverged = r.summary.diverged;
      row.steps = r.summary.steps_executed;
      for (const auto& rec : r.trace) row.eta_hit_zero = row.eta_hit_zero || rec.eta == 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

inline void emit_compare_csv(const std::vector<CompareRow>& rows, const std::filesystem::path& path) {
  using detail::format_double;
  auto out = open_output(path);
  out << "method,mu,beta,best_objective,final_objective,final_eta,max_eta,eta_hit_zero,diverged,steps\n";
  for (const auto& r : rows)
    out << r.method << ',' << format_double(r.mu) << ',' << format_double(r.beta) << ','
        << format_double(r.best_objective) << ',' << format_double(r.final_objective) << ','
        << format_double(r.final_eta) << ',' << format_double(r.max_eta) << ',' << (r.eta_hit_zero ? 1 : 0) << ','
        << (r.diverged ? 1 : 0) << ',' << r.steps << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// LRS-OPT driver

struct LrsOptRun {
  LrsOptResult optimization;
  ExperimentResult evaluation;  // a training run with the optimized schedule
};

/// Optimizes the schedule with fresh training batches for every outer
/// iteration and a fixed initialization, then evaluates it on the same
/// batch stream `run` uses.
inline LrsOptRun run_lrs_opt(const Problem& problem,
                             const std::function<void(std::size_t, double)>& on_iteration = {}) {
  const ExperimentConfig& cfg = problem.config;
  LrsOptSettings settings;
  settings.outer_iterations = cfg.lrs_opt.outer_iterations;
  settings.hyper_lr = cfg.lrs_opt.hyper_lr;
  const Vector init = Vector::Constant(static_cast<Eigen::Index>(cfg.horizon),
                                       cfg.lrs_opt.eta_init.value_or(cfg.scheduler.eta0));
  auto batches_for = [&problem](std::size_t k) { return problem.train_batches("lrs/" + std::to_string(k)); };
  LrsOptRun run;
  run.optimization = lrs_opt(*problem.dynamics, problem.s0, init, settings, batches_for, problem.validation, on_iteration);
  RunOptions options;
  options.schedule = run.optimization.schedule;
  run.evaluation = run_problem(problem, options);
  return run;
}

inline void emit_schedule_csv(const Vector& schedule, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "t,eta\n";
  for (Eigen::Index t = 0; t < schedule.size(); ++t) out << t << ',' << detail::format_double(schedule[t]) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

inline void emit_history_csv(const std::vector<double>& history, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "iteration,objective\n";
  for (std::size_t k = 0; k < history.size(); ++k) out << k << ',' << detail::format_double(history[k]) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace lrsched
