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

/// @file config.hpp
/// JSON experiment and sweep configuration. Parsing is strict: unknown keys,
/// wrong types and out-of-range values are all collected and reported
/// together in one ConfigError.

#pragma once

#include "lrsched/core.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace lrsched {

using Json = nlohmann::ordered_json;

class ConfigError : public ArgumentError {
 public:
  explicit ConfigError(std::vector<std::string> issues)
      : ArgumentError(join(issues)), issues_(std::move(issues)) {}
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& issues) {
    std::string out = "invalid configuration:";
    for (const auto& i : issues) out += "\n  " + i;
    return out;
  }
  std::vector<std::string> issues_;
};

struct ProblemConfig {
  std::string kind = "beale";  // quadratic | beale | bukin | mlp
  std::vector<double> diag = {1.0};
  double eps = 1e-3;
  std::vector<double> w0;  // test functions; empty = default start
  std::vector<std::size_t> hidden = {64, 64};
  std::string activation = "tanh";
  double weight_decay = 0.0;
  bool operator==(const ProblemConfig&) const = default;
};

struct DatasetConfig {
  std::string source = "blobs";  // blobs | idx
  std::size_t n_train = 7000;
  std::size_t n_val = 700;
  std::size_t n_test = 0;
  int classes = 10;
  std::size_t dim = 64;
  double spread = 0.5;
  bool normalize = false;
  std::string train_images, train_labels, test_images, test_labels;
  bool operator==(const DatasetConfig&) const = default;
};

struct DynamicsConfig {
  std::string kind = "sgd";  // sgd | sgdm | adam
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const DynamicsConfig&) const = default;
};

struct SchedulerConfig {
  std::string kind = "marthe";  // marthe | hd | rtho | exponential | constant
  double eta0 = 0.01;
  double beta = 0.0;
  double mu = 0.99;
  double gamma = 1.0;
  bool operator==(const SchedulerConfig&) const = default;
};

struct LrsOptConfig {
  std::size_t outer_iterations = 500;
  double hyper_lr = 1e-3;
  std::optional<double> eta_init;  // defaults to scheduler.eta0
  bool operator==(const LrsOptConfig&) const = default;
};

struct CompareConfig {
  std::vector<double> betas;  // explicit grid; empty = log grid below
  double beta_min = 1e-6;
  double beta_max = 1e-1;
  std::size_t beta_count = 11;
  std::vector<double> mus = {0.9, 0.99};
  bool operator==(const CompareConfig&) const = default;

  std::vector<double> grid() const {
    if (!betas.empty()) return betas;
    std::vector<double> out;
    if (beta_count == 1) return {beta_min};
    const double lo = std::log10(beta_min), hi = std::log10(beta_max);
    for (std::size_t i = 0; i < beta_count; ++i)
      out.push_back(std::pow(10.0, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(beta_count - 1)));
    return out;
  }
};

struct ExperimentConfig {
  ProblemConfig problem;
  DatasetConfig dataset;
  DynamicsConfig dynamics;
  SchedulerConfig scheduler;
  std::size_t horizon = 512;
  std::size_t batch_size = 100;
  std::uint64_t seed = 0;
  std::string sampling = "with_replacement";  // with_replacement | epoch_shuffle
  std::string val_grad_mode = "full";  // full | minibatch
  std::size_t val_batch_size = 100;
  std::optional<double> clip;
  std::size_t eval_every = 1;
  std::size_t patience_epochs = 0;  // 0 disables early stopping
  std::size_t epoch_steps = 50;     // epoch length for test functions
  bool record_timing = false;
  LrsOptConfig lrs_opt;
  CompareConfig compare;
  bool operator==(const ExperimentConfig&) const = default;
};

struct SweepConfig {
  ExperimentConfig base;
  std::vector<std::string> schedulers = {"marthe"};
  std::array<double, 2> beta_range = {1e-6, 1e-3};
  std::array<double, 2> mu_range = {0.9, 0.999};
  std::array<double, 2> gamma_range = {0.9, 1.0};
  double time_budget_s = 60.0;
  std::size_t patience_epochs = 10;
  std::vector<std::uint64_t> seeds = {0};
  std::uint64_t master_seed = 0;
  std::size_t max_trials = 0;  // 0 = until the budget runs out
  bool operator==(const SweepConfig&) const = default;
};

// ---------------------------------------------------------------------------

namespace detail {

/// Reads the members of one JSON object, remembering which keys were used
/// and collecting every problem instead of stopping at the first.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path, std::vector<std::string>& issues)
      : j_(j), path_(std::move(path)), issues_(issues) {
    if (!j_.is_object()) {
      issues_.push_back(where() + ": expected an object");
      ok_ = false;
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!ok_ || !j_.contains(key)) return;
    seen_.insert(key);
    const Json& v = j_.at(key);
    // nlohmann converts numbers between kinds silently; be strict instead.
    bool kind_ok = true;
    if constexpr (std::is_same_v<T, bool>) kind_ok = v.is_boolean();
    else if constexpr (std::is_unsigned_v<T>) kind_ok = v.is_number_unsigned();
    else if constexpr (std::is_integral_v<T>) kind_ok = v.is_number_integer();
    else if constexpr (std::is_floating_point_v<T>) kind_ok = v.is_number();
    else if constexpr (std::is_unsigned_v<typename element<T>::type>) {
      kind_ok = v.is_array();
      if (kind_ok)
        for (const auto& e : v) kind_ok = kind_ok && e.is_number_unsigned();
    }
    if (!kind_ok) {
      issues_.push_back(where(key) + ": expected " + type_name<T>() + ", got " + v.dump());
      return;
    }
    try {
      out = v.template get<T>();
    } catch (const nlohmann::json::exception&) {
      issues_.push_back(where(key) + ": expected " + type_name<T>() + ", got " + j_.at(key).dump());
    }
  }

  void get(const char* key, std::optional<double>& out) {
    if (!ok_ || !j_.contains(key)) return;
    seen_.insert(key);
    const Json& v = j_.at(key);
    if (v.is_null()) {
      out.reset();
    } else if (v.is_number()) {
      out = v.get<double>();
    } else {
      issues_.push_back(where(key) + ": expected number or null, got " + v.dump());
    }
  }

  /// Nested object, or nullptr when absent.
  const Json* child(const char* key) {
    if (!ok_ || !j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() {
    if (!ok_) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) issues_.push_back(where(k) + ": unknown key");
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  template <typename T>
  struct element {
    using type = void;
  };
  template <typename E>
  struct element<std::vector<E>> {
    using type = E;
  };

  template <typename T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, bool>) return "boolean";
    else if constexpr (std::is_same_v<T, std::string>) return "string";
    else if constexpr (std::is_unsigned_v<T>) return "non-negative integer";
    else if constexpr (std::is_integral_v<T>) return "integer";
    else if constexpr (std::is_floating_point_v<T>) return "number";
    else return "array";
  }

  const Json& j_;
  std::string path_;
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
  bool ok_ = true;
};

inline void check(bool cond, std::vector<std::string>& issues, const std::string& msg) {
  if (!cond) issues.push_back(msg);
}

inline bool one_of(const std::string& v, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (v == o) return true;
  return false;
}

inline void read_problem(const Json& j, ProblemConfig& p, std::vector<std::string>& issues) {
  ObjectReader r(j, "problem", issues);
  r.get("kind", p.kind);
  r.get("diag", p.diag);
  r.get("eps", p.eps);
  r.get("w0", p.w0);
  r.get("hidden", p.hidden);
  r.get("activation", p.activation);
  r.get("weight_decay", p.weight_decay);
  r.finish();
}

inline void read_dataset(const Json& j, DatasetConfig& d, std::vector<std::string>& issues) {
  ObjectReader r(j, "dataset", issues);
  r.get("source", d.source);
  r.get("n_train", d.n_train);
  r.get("n_val", d.n_val);
  r.get("n_test", d.n_test);
  r.get("classes", d.classes);
  r.get("dim", d.dim);
  r.get("spread", d.spread);
  r.get("normalize", d.normalize);
  r.get("train_images", d.train_images);
  r.get("train_labels", d.train_labels);
  r.get("test_images", d.test_images);
  r.get("test_labels", d.test_labels);
  r.finish();
}

inline void read_dynamics(const Json& j, DynamicsConfig& d, std::vector<std::string>& issues) {
  ObjectReader r(j, "dynamics", issues);
  r.get("kind", d.kind);
  r.get("momentum", d.momentum);
  r.get("beta1", d.beta1);
  r.get("beta2", d.beta2);
  r.get("eps", d.eps);
  r.finish();
}

inline void read_scheduler(const Json& j, SchedulerConfig& s, std::vector<std::string>& issues) {
  ObjectReader r(j, "scheduler", issues);
  r.get("kind", s.kind);
  r.get("eta0", s.eta0);
  r.get("beta", s.beta);
  r.get("mu", s.mu);
  r.get("gamma", s.gamma);
  r.finish();
}

inline void read_lrs_opt(const Json& j, LrsOptConfig& l, std::vector<std::string>& issues) {
  ObjectReader r(j, "lrs_opt", issues);
  r.get("outer_iterations", l.outer_iterations);
  r.get("hyper_lr", l.hyper_lr);
  r.get("eta_init", l.eta_init);
  r.finish();
}

inline void read_compare(const Json& j, CompareConfig& c, std::vector<std::string>& issues) {
  ObjectReader r(j, "compare", issues);
  r.get("betas", c.betas);
  r.get("beta_min", c.beta_min);
  r.get("beta_max", c.beta_max);
  r.get("beta_count", c.beta_count);
  r.get("mus", c.mus);
  r.finish();
}

inline void read_experiment(const Json& j, ExperimentConfig& c, std::vector<std::string>& issues,
                            const std::string& path = {}) {
  ObjectReader r(j, path, issues);
  if (const Json* p = r.child("problem")) read_problem(*p, c.problem, issues);
  if (const Json* p = r.child("dataset")) read_dataset(*p, c.dataset, issues);
  if (const Json* p = r.child("dynamics")) read_dynamics(*p, c.dynamics, issues);
  if (const Json* p = r.child("scheduler")) read_scheduler(*p, c.scheduler, issues);
  if (const Json* p = r.child("lrs_opt")) read_lrs_opt(*p, c.lrs_opt, issues);
  if (const Json* p = r.child("compare")) read_compare(*p, c.compare, issues);
  r.get("horizon", c.horizon);
  r.get("batch_size", c.batch_size);
  r.get("seed", c.seed);
  r.get("sampling", c.sampling);
  r.get("val_grad_mode", c.val_grad_mode);
  r.get("val_batch_size", c.val_batch_size);
  r.get("clip", c.clip);
  r.get("eval_every", c.eval_every);
  r.get("patience_epochs", c.patience_epochs);
  r.get("epoch_steps", c.epoch_steps);
  r.get("record_timing", c.record_timing);
  r.finish();
}

}  // namespace detail

/// Range and consistency checks; returns one message per violation.
inline std::vector<std::string> validation_issues(const ExperimentConfig& c) {
  using detail::check;
  using detail::one_of;
  std::vector<std::string> out;
  const auto& p = c.problem;
  check(one_of(p.kind, {"quadratic", "beale", "bukin", "mlp"}), out,
        "problem.kind: must be one of quadratic, beale, bukin, mlp (got \"" + p.kind + "\")");
  if (p.kind == "quadratic") {
    check(!p.diag.empty(), out, "problem.diag: must be nonempty");
    for (double a : p.diag) check(a >= 0.0 && std::isfinite(a), out, "problem.diag: entries must be finite and >= 0");
    check(p.w0.empty() || p.w0.size() == p.diag.size(), out, "problem.w0: length must match problem.diag");
  }
  if (p.kind == "beale" || p.kind == "bukin") check(p.w0.empty() || p.w0.size() == 2, out, "problem.w0: must have 2 entries");
  if (p.kind == "bukin") check(p.eps > 0.0, out, "problem.eps: must be > 0");
  if (p.kind == "mlp") {
    for (auto h : p.hidden) check(h > 0, out, "problem.hidden: layer widths must be > 0");
    check(one_of(p.activation, {"tanh", "softplus", "relu"}), out,
          "problem.activation: must be one of tanh, softplus, relu");
    check(p.weight_decay >= 0.0, out, "problem.weight_decay: must be >= 0");
    const auto& d = c.dataset;
    check(one_of(d.source, {"blobs", "idx"}), out, "dataset.source: must be blobs or idx");
    check(d.n_train > 0, out, "dataset.n_train: must be > 0");
    check(d.n_val > 0, out, "dataset.n_val: must be > 0");
    if (d.source == "blobs") {
      check(d.classes >= 2, out, "dataset.classes: must be >= 2");
      check(d.dim > 0, out, "dataset.dim: must be > 0");
      check(d.spread >= 0.0, out, "dataset.spread: must be >= 0");
    } else {
      check(!d.train_images.empty() && !d.train_labels.empty(), out,
            "dataset.train_images/train_labels: required for idx source");
      check(d.n_test == 0 || (!d.test_images.empty() && !d.test_labels.empty()), out,
            "dataset.test_images/test_labels: required when n_test > 0");
    }
    check(c.batch_size > 0 && c.batch_size <= d.n_train, out, "batch_size: must be in [1, dataset.n_train]");
    check(c.val_batch_size > 0 && c.val_batch_size <= d.n_val, out, "val_batch_size: must be in [1, dataset.n_val]");
  }
  const auto& dy = c.dynamics;
  check(one_of(dy.kind, {"sgd", "sgdm", "adam"}), out, "dynamics.kind: must be one of sgd, sgdm, adam");
  check(dy.momentum >= 0.0 && dy.momentum < 1.0, out, "dynamics.momentum: must be in [0, 1)");
  check(dy.beta1 >= 0.0 && dy.beta1 < 1.0, out, "dynamics.beta1: must be in [0, 1)");
  check(dy.beta2 >= 0.0 && dy.beta2 < 1.0, out, "dynamics.beta2: must be in [0, 1)");
  check(dy.eps > 0.0, out, "dynamics.eps: must be > 0");
  const auto& s = c.scheduler;
  check(one_of(s.kind, {"marthe", "hd", "rtho", "exponential", "constant"}), out,
        "scheduler.kind: must be one of marthe, hd, rtho, exponential, constant");
  check(s.eta0 >= 0.0 && std::isfinite(s.eta0), out, "scheduler.eta0: must be finite and >= 0");
  check(s.beta >= 0.0 && std::isfinite(s.beta), out, "scheduler.beta: must be finite and >= 0");
  check(s.mu >= 0.0 && s.mu <= 1.0, out, "scheduler.mu: must be in [0, 1]");
  check(s.gamma > 0.0 && s.gamma <= 1.0, out, "scheduler.gamma: must be in (0, 1]");
  check(c.horizon >= 1, out, "horizon: must be >= 1");
  check(one_of(c.sampling, {"with_replacement", "epoch_shuffle"}), out,
        "sampling: must be with_replacement or epoch_shuffle");
  check(one_of(c.val_grad_mode, {"full", "minibatch"}), out, "val_grad_mode: must be full or minibatch");
  check(c.val_grad_mode == "full" || p.kind == "mlp", out, "val_grad_mode: minibatch requires problem.kind mlp");
  check(!c.clip || *c.clip > 0.0, out, "clip: must be > 0 when set");
  check(c.eval_every >= 1, out, "eval_every: must be >= 1");
  check(c.epoch_steps >= 1, out, "epoch_steps: must be >= 1");
  check(c.lrs_opt.outer_iterations >= 1, out, "lrs_opt.outer_iterations: must be >= 1");
  check(c.lrs_opt.hyper_lr > 0.0, out, "lrs_opt.hyper_lr: must be > 0");
  check(!c.lrs_opt.eta_init || *c.lrs_opt.eta_init >= 0.0, out, "lrs_opt.eta_init: must be >= 0");
  const auto& cmp = c.compare;
  for (double b : cmp.betas) check(b >= 0.0, out, "compare.betas: entries must be >= 0");
  check(cmp.beta_min > 0.0 && cmp.beta_max >= cmp.beta_min, out, "compare.beta_min/beta_max: need 0 < min <= max");
  check(cmp.beta_count >= 1, out, "compare.beta_count: must be >= 1");
  for (double m : cmp.mus) check(m >= 0.0 && m <= 1.0, out, "compare.mus: entries must be in [0, 1]");
  return out;
}

inline ExperimentConfig parse_experiment_config(const Json& j) {
  ExperimentConfig c;
  std::vector<std::string> issues;
  detail::read_experiment(j, c, issues);
  // Fields that failed to read keep their defaults, so range checks still apply.
  for (auto& msg : validation_issues(c)) issues.push_back(std::move(msg));
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return c;
}

inline Json parse_json_text(const std::string& text, const std::string& origin = "<text>") {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({origin + ": malformed JSON: " + e.what()});
  }
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path.string());
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_json_file(path));
}

/// Canonical form with every field spelled out.
inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["problem"] = {{"kind", c.problem.kind},   {"diag", c.problem.diag},
                  {"eps", c.problem.eps},     {"w0", c.problem.w0},
                  {"hidden", c.problem.hidden}, {"activation", c.problem.activation},
                  {"weight_decay", c.problem.weight_decay}};
  j["dataset"] = {{"source", c.dataset.source},           {"n_train", c.dataset.n_train},
                  {"n_val", c.dataset.n_val},             {"n_test", c.dataset.n_test},
                  {"classes", c.dataset.classes},         {"dim", c.dataset.dim},
                  {"spread", c.dataset.spread},           {"normalize", c.dataset.normalize},
                  {"train_images", c.dataset.train_images}, {"train_labels", c.dataset.train_labels},
                  {"test_images", c.dataset.test_images}, {"test_labels", c.dataset.test_labels}};
  j["dynamics"] = {{"kind", c.dynamics.kind},   {"momentum", c.dynamics.momentum}, {"beta1", c.dynamics.beta1},
                   {"beta2", c.dynamics.beta2}, {"eps", c.dynamics.eps}};
  j["scheduler"] = {{"kind", c.scheduler.kind}, {"eta0", c.scheduler.eta0}, {"beta", c.scheduler.beta},
                    {"mu", c.scheduler.mu},     {"gamma", c.scheduler.gamma}};
  j["horizon"] = c.horizon;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["sampling"] = c.sampling;
  j["val_grad_mode"] = c.val_grad_mode;
  j["val_batch_size"] = c.val_batch_size;
  j["clip"] = c.clip ? Json(*c.clip) : Json(nullptr);
  j["eval_every"] = c.eval_every;
  j["patience_epochs"] = c.patience_epochs;
  j["epoch_steps"] = c.epoch_steps;
  j["record_timing"] = c.record_timing;
  j["lrs_opt"] = {{"outer_iterations", c.lrs_opt.outer_iterations},
                  {"hyper_lr", c.lrs_opt.hyper_lr},
                  {"eta_init", c.lrs_opt.eta_init ? Json(*c.lrs_opt.eta_init) : Json(nullptr)}};
  j["compare"] = {{"betas", c.compare.betas},         {"beta_min", c.compare.beta_min},
                  {"beta_max", c.compare.beta_max},   {"beta_count", c.compare.beta_count},
                  {"mus", c.compare.mus}};
  return j;
}

inline SweepConfig parse_sweep_config(const Json& j) {
  SweepConfig s;
  std::vector<std::string> issues;
  detail::ObjectReader r(j, "", issues);
  if (const Json* b = r.child("base")) {
    detail::read_experiment(*b, s.base, issues, "base");
  } else {
    issues.push_back("base: required");
  }
  r.get("schedulers", s.schedulers);
  r.get("beta_range", s.beta_range);
  r.get("mu_range", s.mu_range);
  r.get("gamma_range", s.gamma_range);
  r.get("time_budget_s", s.time_budget_s);
  r.get("patience_epochs", s.patience_epochs);
  r.get("seeds", s.seeds);
  r.get("master_seed", s.master_seed);
  r.get("max_trials", s.max_trials);
  r.finish();
  {
    for (auto& msg : validation_issues(s.base)) issues.push_back("base." + msg);
    using detail::check;
    check(!s.schedulers.empty(), issues, "schedulers: must be nonempty");
    for (const auto& k : s.schedulers)
      check(detail::one_of(k, {"marthe", "hd", "rtho", "exponential", "constant"}), issues,
            "schedulers: unknown scheduler \"" + k + "\"");
    check(s.beta_range[0] > 0.0 && s.beta_range[0] <= s.beta_range[1], issues,
          "beta_range: need 0 < low <= high");
    check(s.mu_range[0] >= 0.0 && s.mu_range[0] <= s.mu_range[1] && s.mu_range[1] <= 1.0, issues,
          "mu_range: need 0 <= low <= high <= 1");
    check(s.gamma_range[0] > 0.0 && s.gamma_range[0] <= s.gamma_range[1] && s.gamma_range[1] <= 1.0, issues,
          "gamma_range: need 0 < low <= high <= 1");
    check(s.time_budget_s > 0.0, issues, "time_budget_s: must be > 0");
    check(!s.seeds.empty(), issues, "seeds: must be nonempty");
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return s;
}

inline SweepConfig load_sweep_config(const std::filesystem::path& path) { return parse_sweep_config(read_json_file(path)); }

}  // namespace lrsched
