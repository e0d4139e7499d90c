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

/// @file verify.hpp
/// Self-check suite behind `lrsched verify`: hypergradient oracles against
/// each other and against finite differences, the HD/RTHO special cases of
/// MARTHE, and dynamics Jacobians against finite differences.
///
/// Every check reports a measured error and a tolerance. `tolerance_scale`
/// multiplies all tolerances; values below 1 tighten the suite.

#pragma once

#include "lrsched/mlp.hpp"
#include "lrsched/oracle.hpp"
#include "lrsched/problems.hpp"
#include "lrsched/schedulers.hpp"

#include <chrono>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace lrsched {

struct CheckResult {
  std::string name;
  double measured = 0.0;  // worst error seen
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  double tolerance_scale = 1.0;
  std::uint64_t seed = 0;
};

namespace verify_detail {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline Vector gaussian(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline Vector uniform(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Random augmented state; Adam's second moments stay positive.
inline OptimizerState random_state(const Dynamics& dyn, std::mt19937_64& rng, double scale) {
  const auto d = static_cast<Eigen::Index>(dyn.dim());
  OptimizerState s = dyn.initial_state(gaussian(rng, d, scale));
  if (dyn.num_blocks() == 2) s.values.tail(d) = gaussian(rng, d, scale);
  if (dyn.num_blocks() == 3) {
    s.values.segment(d, d) = gaussian(rng, d, 0.3);
    s.values.tail(d) = gaussian(rng, d, 0.3).cwiseAbs().array() + 0.05;
    s.step = std::uniform_int_distribution<std::size_t>(0, 20)(rng);
  }
  return s;
}

inline std::vector<DynamicsPtr> all_dynamics(const ObjectivePtr& obj) {
  return {sgd_dynamics(obj), sgdm_dynamics(obj, 0.9), adam_dynamics(obj)};
}

struct Tracker {
  double worst = 0.0;
  std::string where;
  void see(double err, const std::string& label) {
    if (!(err <= worst)) {  // NaN sticks
      worst = err;
      where = label;
    }
  }
};

}  // namespace verify_detail

/// Forward-full vs reverse hypergradient and both vs central differences on
/// a seeded 10-dim quadratic, SGD, T = 50.
inline std::vector<CheckResult> check_hypergradient_exactness(std::uint64_t seed) {
  using namespace verify_detail;
  std::mt19937_64 rng(seed ^ 0x51u);
  const auto obj = quadratic_objective(uniform(rng, 10, 0.1, 2.0));
  const auto dyn = sgd_dynamics(obj);
  const auto s0 = dyn->initial_state(gaussian(rng, 10));
  const BoundObjective outer{obj, {}};
  const Vector eta = uniform(rng, 50, 0.01, 0.1);
  // Analytic objectives ignore the batch; the recorded stream is replayed as is.
  const auto traj = run_trajectory(*dyn, s0, eta, full_objective_batches(), outer);
  const auto frozen = frozen_batches(traj.batches);
  const Vector fwd = hypergrad_forward_full(traj, *dyn);
  const Vector rev = hypergrad_reverse(traj, *dyn);
  Tracker dual, fd;
  for (Eigen::Index t = 0; t < 50; ++t) {
    dual.see(relative_error(fwd[t], rev[t]), "t=" + std::to_string(t));
    const double h = 1e-5 * std::max(1.0, eta[t]);
    const double value = hypergrad_fd(*dyn, s0, eta, frozen, outer, static_cast<std::size_t>(t), h).value;
    fd.see(std::max(relative_error(fwd[t], value), relative_error(rev[t], value)), "t=" + std::to_string(t));
  }
  return {{"hypergradient forward vs reverse", dual.worst, 1e-10, false, dual.where},
          {"hypergradient vs finite differences", fd.worst, 1e-5, false, fd.where}};
}

/// L = E = w^2/2, w0 = 1, eta = (0.1, 0.2): grad f = (-0.576, -0.648).
inline CheckResult check_hand_instance() {
  using namespace verify_detail;
  const auto obj = quadratic_objective(vec({1.0}));
  const auto dyn = sgd_dynamics(obj);
  const auto traj = run_trajectory(*dyn, dyn->initial_state(vec({1.0})), vec({0.1, 0.2}), full_objective_batches(),
                                   {obj, {}});
  const Vector expected = vec({-0.576, -0.648});
  const double err = std::max((hypergrad_forward_full(traj, *dyn) - expected).cwiseAbs().maxCoeff(),
                              (hypergrad_reverse(traj, *dyn) - expected).cwiseAbs().maxCoeff());
  return {"hand instance (-0.576, -0.648)", err, 1e-12, false, "absolute"};
}

/// MARTHE with mu = 0 against HD over 500 Beale steps; measured is the
/// number of steps whose eta or state differ in any bit.
inline CheckResult check_hd_identity() {
  using namespace verify_detail;
  const auto dyn = sgd_dynamics(beale_objective());
  const BoundObjective outer{dyn->objective_ptr(), {}};
  auto src_m = ValGradSource::full(outer);
  auto src_h = ValGradSource::full(outer);
  auto sched = SchedulerState::start(0.005, 1e-5, 0.0, 2);
  HdState hd;
  hd.eta = 0.005;
  hd.beta = 1e-5;
  OptimizerState sm = dyn->initial_state(vec({0.0, 0.0}));
  OptimizerState sh = sm;
  std::size_t mismatches = 0;
  std::string first;
  for (std::size_t t = 0; t < 500; ++t) {
    auto m = marthe_step(sched, *dyn, sm, {}, src_m);
    auto h = hd_step(hd, *dyn, sh, {}, src_h);
    if (m.diverged || h.diverged) return {"MARTHE mu=0 equals HD bitwise", 1.0, 0.0, false, "diverged"};
    sched = std::move(m.scheduler);
    hd = std::move(h.scheduler);
    sm = std::move(m.state);
    sh = std::move(h.state);
    if (sched.eta != hd.eta || !(sm == sh)) {
      if (mismatches++ == 0) first = "first at step " + std::to_string(t);
    }
  }
  return {"MARTHE mu=0 equals HD bitwise", static_cast<double>(mismatches), 0.0, false, first};
}

/// MARTHE with mu = 1 against the explicit RTHO sum, 100 Beale steps.
inline CheckResult check_rtho_identity() {
  using namespace verify_detail;
  Tracker tr;
  for (const auto& dyn : {sgd_dynamics(beale_objective()), sgdm_dynamics(beale_objective(), 0.5)}) {
    const BoundObjective outer{dyn->objective_ptr(), {}};
    auto src = ValGradSource::full(outer);
    auto sched = SchedulerState::start(0.002, 1e-6, 1.0, dyn->state_dim());
    std::vector<OptimizerState> states = {dyn->initial_state(vec({0.0, 0.0}))};
    std::vector<double> etas;
    const std::vector<Batch> batches(100);
    for (std::size_t t = 0; t < 100; ++t) {
      auto out = marthe_step(sched, *dyn, states.back(), {}, src);
      if (out.diverged) return {"MARTHE mu=1 equals RTHO sum", kInfinity, 1e-12, false, "diverged"};
      if (t > 0) {
        const double direct =
            rtho_delta_direct(*dyn, std::span(states).first(t), std::span<const double>(etas).first(t),
                              std::span(batches).first(t), outer.grad(states[t].weights()));
        tr.see(relative_error(out.scheduler.last_delta, direct), dyn->name() + " step " + std::to_string(t));
      }
      sched = std::move(out.scheduler);
      etas.push_back(sched.eta);
      states.push_back(std::move(out.state));
    }
  }
  return {"MARTHE mu=1 equals RTHO sum", tr.worst, 1e-12, false, tr.where};
}

/// Recursive tangent <Z_K, grad E> against the direct discounted sum
/// S_{K,mu}, for mu in {0, 0.3, 0.9, 1} and K <= 20.
inline CheckResult check_s_k_mu(std::uint64_t seed) {
  using namespace verify_detail;
  Tracker tr;
  const auto data = std::make_shared<const Dataset>(make_blobs(40, 2, 2, 0.5, RngStream(seed, "verify/blobs")));
  MlpSpec spec;
  spec.layer_sizes = {2, 16, 2};
  const auto mlp = mlp_objective(spec);
  const BoundObjective mlp_outer{mlp, Batch::all_of(data)};
  for (const auto& dyn : {sgd_dynamics(beale_objective()), sgdm_dynamics(mlp, 0.9), adam_dynamics(mlp)}) {
    const bool beale = dyn->dim() == 2;
    const BoundObjective outer = beale ? BoundObjective{dyn->objective_ptr(), {}} : mlp_outer;
    const auto s0 = beale ? dyn->initial_state(vec({0.0, 0.0}))
                          : dyn->initial_state(mlp->initial_weights(RngStream(seed, "verify/init")));
    const double eta0 = dyn->name() == "adam" ? 0.01 : 0.05;
    auto sampler = std::make_shared<BatchSampler>(40, 10, RngStream(seed, "verify/train"));
    const BatchStream stream = beale ? full_objective_batches() : sampled_batches(sampler, data);
    const Vector eta = Vector::Constant(20, eta0);
    const auto traj = run_trajectory(*dyn, s0, eta, stream, outer);
    for (double mu : {0.0, 0.3, 0.9, 1.0}) {
      Vector z = Vector::Zero(static_cast<Eigen::Index>(dyn->state_dim()));
      for (std::size_t k = 1; k <= 20; ++k) {
        z = marthe_tangent_update(z, mu, *dyn, traj.states[k - 1], eta0, traj.batches[k - 1]);
        const double recursive = marthe_delta(z, outer.grad(traj.states[k].weights()));
        tr.see(relative_error(recursive, s_k_mu_direct(*dyn, traj, mu, k, outer)),
               dyn->name() + " mu=" + std::to_string(mu) + " K=" + std::to_string(k));
      }
    }
  }
  return {"tangent recursion equals S_{K,mu}", tr.worst, 1e-10, false, tr.where};
}

/// jvp and lr_col against directional central differences of step, for
/// SGD, SGDM and Adam on a 5-dim quadratic and a 2-16-2 tanh MLP, 50
/// random points each.
inline std::vector<CheckResult> check_dynamics_jacobians(std::uint64_t seed) {
  using namespace verify_detail;
  std::mt19937_64 rng(seed ^ 0x4au);
  const auto data = std::make_shared<const Dataset>(make_blobs(40, 2, 2, 0.5, RngStream(seed, "verify/blobs")));
  MlpSpec spec;
  spec.layer_sizes = {2, 16, 2};
  struct Case {
    std::string label;
    ObjectivePtr objective;
    Batch batch;
    double scale;
  };
  const std::vector<Case> cases = {{"quadratic", quadratic_objective(uniform(rng, 5, 0.1, 2.0)), {}, 1.0},
                                   {"mlp", mlp_objective(spec), Batch::all_of(data), 0.5}};
  Tracker jvp_err, col_err;
  for (const auto& c : cases) {
    for (const auto& dyn : all_dynamics(c.objective)) {
      for (int k = 0; k < 50; ++k) {
        const auto s = random_state(*dyn, rng, c.scale);
        const double eta = std::uniform_real_distribution<double>(0.001, 0.1)(rng);
        const Vector z = gaussian(rng, static_cast<Eigen::Index>(dyn->state_dim()));
        const double h = 1e-5 * std::max(1.0, s.values.cwiseAbs().maxCoeff());
        OptimizerState plus = s, minus = s;
        plus.values += h * z;
        minus.values -= h * z;
        const Vector fd_state = (dyn->step(plus, eta, c.batch).values - dyn->step(minus, eta, c.batch).values) / (2 * h);
        const std::string label = c.label + "/" + dyn->name() + " point " + std::to_string(k);
        jvp_err.see(relative_error(dyn->jvp(s, eta, c.batch, z), fd_state), label);
        const double he = 1e-6;
        const Vector fd_eta = (dyn->step(s, eta + he, c.batch).values - dyn->step(s, eta - he, c.batch).values) / (2 * he);
        col_err.see(relative_error(dyn->lr_col(s, eta, c.batch), fd_eta), label);
      }
    }
  }
  return {{"jvp vs finite differences", jvp_err.worst, 1e-5, false, jvp_err.where},
          {"lr_col vs finite differences", col_err.worst, 1e-5, false, col_err.where}};
}

/// Runs every check; `on_result` sees each one as soon as it finishes.
inline std::vector<CheckResult> run_verification(const VerifyOptions& options = {},
                                                 const std::function<void(const CheckResult&)>& on_result = {}) {
  using Step = std::function<std::vector<CheckResult>()>;
  const std::uint64_t seed = options.seed;
  const std::vector<Step> steps = {
      [&] { return check_hypergradient_exactness(seed); },
      [] { return std::vector<CheckResult>{check_hand_instance()}; },
      [] { return std::vector<CheckResult>{check_hd_identity()}; },
      [] { return std::vector<CheckResult>{check_rtho_identity()}; },
      [&] { return std::vector<CheckResult>{check_s_k_mu(seed)}; },
      [&] { return check_dynamics_jacobians(seed); },
  };
  std::vector<CheckResult> results;
  for (const auto& step : steps) {
    const auto started = std::chrono::steady_clock::now();
    std::vector<CheckResult> batch;
    try {
      batch = step();
    } catch (const std::exception& e) {
      batch = {{"check raised", verify_detail::kInfinity, 0.0, false, e.what()}};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    for (auto& r : batch) {
      r.tolerance *= options.tolerance_scale;
      r.passed = r.measured <= r.tolerance;
      r.seconds = seconds;
      if (on_result) on_result(r);
      results.push_back(std::move(r));
    }
  }
  return results;
}

inline bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.passed) return false;
  return !results.empty();
}

}  // namespace lrsched
