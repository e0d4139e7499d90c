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

/// @file oracle.hpp
/// Exact offline hypergradients of f_T(eta) = E(w_T(eta)) with respect to the
/// whole schedule eta = (eta_0, ..., eta_{T-1}).
///
/// Forward mode carries the full tangent matrix dw_t/deta (one column per
/// schedule entry, O(T^2) Jacobian products). Reverse mode stores the
/// trajectory and sweeps adjoints backwards (O(T) products). Finite
/// differences on frozen batches provide an independent check. `lrs_opt`
/// runs projected gradient descent on the schedule.

#pragma once

#include "lrsched/dynamics.hpp"
#include "lrsched/schedulers.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lrsched {

/// Batch for step t. Deterministic objectives use empty batches.
using BatchStream = std::function<Batch(std::size_t)>;

inline BatchStream full_objective_batches() {
  return [](std::size_t) { return Batch{}; };
}

inline BatchStream frozen_batches(std::vector<Batch> batches) {
  return [b = std::move(batches)](std::size_t t) {
    if (t >= b.size()) throw std::out_of_range("frozen batch stream exhausted at step " + std::to_string(t));
    return b[t];
  };
}

/// Draws from `sampler` in call order; the stream must be consumed in order.
inline BatchStream sampled_batches(std::shared_ptr<BatchSampler> sampler, DatasetPtr data) {
  return [sampler = std::move(sampler), data = std::move(data)](std::size_t) { return next_batch(*sampler, data); };
}

struct Trajectory {
  std::vector<OptimizerState> states;  // s_0 .. s_T (shorter if diverged)
  Vector etas;
  std::vector<Batch> batches;
  Vector final_val_grad;
  double final_val_loss = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
  std::size_t last_finite = 0;  // index of the last finite state

  std::size_t horizon() const { return static_cast<std::size_t>(etas.size()); }
  const OptimizerState& final_state() const { return states.back(); }
};

struct OracleLimits {
  double max_forward_values = 1e6;    // state_dim * T for the full tangent
  double max_trajectory_values = 2e8; // state_dim * (T + 1) kept for reverse mode
};

inline Trajectory run_trajectory(const Dynamics& dynamics, const OptimizerState& s0, const VecRef& schedule,
                                 const BatchStream& batches, const BoundObjective& outer,
                                 bool record_batches = true) {
  const auto horizon = static_cast<std::size_t>(schedule.size());
  require(horizon >= 1, "run_trajectory: schedule must be nonempty");
  Trajectory traj;
  traj.etas = schedule;
  traj.states.reserve(horizon + 1);
  traj.states.push_back(s0);
  if (record_batches) traj.batches.reserve(horizon);
  try {
    for (std::size_t t = 0; t < horizon; ++t) {
      Batch batch = batches(t);
      OptimizerState next = dynamics.step(traj.states.back(), schedule[static_cast<Eigen::Index>(t)], batch);
      if (record_batches) traj.batches.push_back(std::move(batch));
      if (!next.finite()) {
        traj.diverged = true;
        break;
      }
      traj.states.push_back(std::move(next));
    }
    if (!traj.diverged) {
      const LossGrad e = outer.loss_grad(traj.final_state().weights());
      traj.final_val_loss = e.loss;
      traj.final_val_grad = e.grad;
      traj.diverged = !std::isfinite(e.loss) || !e.grad.allFinite();
    }
  } catch (const NumericError&) {
    traj.diverged = true;
  }
  traj.last_finite = traj.states.size() - 1;
  return traj;
}

namespace detail {

inline void require_replayable(const Trajectory& traj, const char* who) {
  if (traj.diverged) throw ArgumentError(std::string(who) + ": trajectory diverged");
  if (traj.batches.size() != traj.horizon() || traj.states.size() != traj.horizon() + 1)
    throw ArgumentError(std::string(who) + ": trajectory was not recorded with its batches");
}

inline Vector pad_to_state(const VecRef& weights_part, std::size_t state_dim) {
  Vector u = Vector::Zero(static_cast<Eigen::Index>(state_dim));
  u.head(weights_part.size()) = weights_part;
  return u;
}

}  // namespace detail

/// dw_t/deta as a state_dim x T matrix after `steps` updates of the tangent
/// system W_{t+1} = A_t W_t + B_t, W_0 = 0. Column j stays exactly zero for
/// j >= steps.
inline Eigen::MatrixXd forward_tangent(const Trajectory& traj, const Dynamics& dynamics, std::size_t steps,
                                       const OracleLimits& limits = {}) {
  detail::require_replayable(traj, "forward_tangent");
  require(steps <= traj.horizon(), "forward_tangent: steps beyond the horizon");
  const double values = static_cast<double>(dynamics.state_dim()) * static_cast<double>(traj.horizon());
  if (values > limits.max_forward_values)
    throw SizeGuardError("forward-mode hypergradient needs " + std::to_string(values) +
                         " tangent values (limit " + std::to_string(limits.max_forward_values) +
                         "); use hypergrad_reverse for this instance");
  Eigen::MatrixXd tangent = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dynamics.state_dim()),
                                                  static_cast<Eigen::Index>(traj.horizon()));
  for (std::size_t t = 0; t < steps; ++t) {
    const OptimizerState& s = traj.states[t];
    const double eta = traj.etas[static_cast<Eigen::Index>(t)];
    for (std::size_t j = 0; j < t; ++j) {
      const Vector col = tangent.col(static_cast<Eigen::Index>(j));
      tangent.col(static_cast<Eigen::Index>(j)) = dynamics.jvp(s, eta, traj.batches[t], col);
    }
    tangent.col(static_cast<Eigen::Index>(t)) = dynamics.lr_col(s, eta, traj.batches[t]);
  }
  return tangent;
}

/// grad f_T = (dw_T/deta)^T grad E(w_T) by forward mode.
inline Vector hypergrad_forward_full(const Trajectory& traj, const Dynamics& dynamics,
                                     const OracleLimits& limits = {}) {
  const Eigen::MatrixXd tangent = forward_tangent(traj, dynamics, traj.horizon(), limits);
  return tangent.topRows(static_cast<Eigen::Index>(dynamics.dim())).transpose() * traj.final_val_grad;
}

/// grad f_T by reverse accumulation over the stored trajectory:
///   u = grad E(w_T);  for t = T-1..0: g[t] = <lr_col_t, u>, u = A_t^T u.
inline Vector hypergrad_reverse(const Trajectory& traj, const Dynamics& dynamics, const OracleLimits& limits = {}) {
  detail::require_replayable(traj, "hypergrad_reverse");
  const double values = static_cast<double>(dynamics.state_dim()) * static_cast<double>(traj.states.size());
  if (values > limits.max_trajectory_values)
    throw SizeGuardError("stored trajectory of " + std::to_string(values) + " values exceeds the limit of " +
                         std::to_string(limits.max_trajectory_values));
  Vector result(static_cast<Eigen::Index>(traj.horizon()));
  Vector u = detail::pad_to_state(traj.final_val_grad, dynamics.state_dim());
  for (std::size_t t = traj.horizon(); t-- > 0;) {
    auto pulled = dynamics.pullback(traj.states[t], traj.etas[static_cast<Eigen::Index>(t)], traj.batches[t], u);
    result[static_cast<Eigen::Index>(t)] = pulled.lr_dot;
    u = std::move(pulled.transposed);
  }
  return result;
}

/// f_T(eta) on a fixed batch sequence; NaN when the run diverges.
inline double final_objective(const Dynamics& dynamics, const OptimizerState& s0, const VecRef& schedule,
                              const BatchStream& batches, const BoundObjective& outer) {
  const Trajectory traj = run_trajectory(dynamics, s0, schedule, batches, outer, false);
  return traj.diverged ? std::numeric_limits<double>::quiet_NaN() : traj.final_val_loss;
}

struct FdHypergrad {
  double value;
  bool one_sided;  // eta_t < h: forward difference keeps the schedule feasible
};

/// Central difference of f_T along e_t with frozen batches.
inline FdHypergrad hypergrad_fd(const Dynamics& dynamics, const OptimizerState& s0, const VecRef& schedule,
                                const BatchStream& batches, const BoundObjective& outer, std::size_t t, double h) {
  if (t >= static_cast<std::size_t>(schedule.size()))
    throw std::out_of_range("hypergrad_fd: index " + std::to_string(t) + " beyond horizon " +
                            std::to_string(schedule.size()));
  require(h > 0.0, "hypergrad_fd: step must be positive");
  const auto i = static_cast<Eigen::Index>(t);
  Vector plus = schedule;
  plus[i] += h;
  const double f_plus = final_objective(dynamics, s0, plus, batches, outer);
  if (schedule[i] < h) {
    const double f0 = final_objective(dynamics, s0, schedule, batches, outer);
    return {(f_plus - f0) / h, true};
  }
  Vector minus = schedule;
  minus[i] -= h;
  return {(f_plus - final_objective(dynamics, s0, minus, batches, outer)) / (2.0 * h), false};
}

/// g'_K(u, xi): derivative of E(u_K) after K steps from u with respect to
/// the first learning rate xi_0, by reverse accumulation over the segment.
inline double g_prime_k(const Dynamics& dynamics, const OptimizerState& u0, std::span<const double> xis,
                        std::span<const Batch> batches, const BoundObjective& outer) {
  const std::size_t k = xis.size();
  require(k >= 1, "g_prime_k: K must be >= 1");
  require(batches.size() >= k, "g_prime_k: need one batch per step");
  std::vector<OptimizerState> states;
  states.reserve(k + 1);
  states.push_back(u0);
  for (std::size_t i = 0; i < k; ++i) states.push_back(dynamics.step(states.back(), xis[i], batches[i]));
  Vector u = detail::pad_to_state(outer.grad(states.back().weights()), dynamics.state_dim());
  double result = 0.0;
  for (std::size_t i = k; i-- > 0;) {
    auto pulled = dynamics.pullback(states[i], xis[i], batches[i], u);
    if (i == 0) result = pulled.lr_dot;
    u = std::move(pulled.transposed);
  }
  return result;
}

/// S_{K,mu} = sum_{i<K} mu^{K-1-i} g'_{K-i}(u_i, xi_{i..K-1}) computed term by
/// term on the trajectory prefix; the recursive tangent must reproduce it as
/// <Z_K, grad E(u_K)>.
inline double s_k_mu_direct(const Dynamics& dynamics, const Trajectory& traj, double mu, std::size_t k,
                            const BoundObjective& outer) {
  require(k >= 1 && k <= traj.horizon() && traj.batches.size() >= k, "s_k_mu_direct: prefix shorter than K");
  const std::span<const double> etas(traj.etas.data(), traj.horizon());
  const std::span<const Batch> batches(traj.batches);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double weight = std::pow(mu, static_cast<double>(k - 1 - i));
    total += weight * g_prime_k(dynamics, traj.states[i], etas.subspan(i, k - i), batches.subspan(i, k - i), outer);
  }
  return total;
}

// ---------------------------------------------------------------------------
// LRS-OPT

struct LrsOptSettings {
  std::size_t outer_iterations = 500;
  double hyper_lr = 1e-3;
  OracleLimits limits{};
};

struct LrsOptResult {
  Vector schedule;
  std::vector<double> history;  // f_T per outer iteration, NaN when skipped
  std::size_t skipped = 0;
  double final_hyper_lr = 0.0;
};

/// Projected gradient descent eta <- max(eta - hyper_lr grad f_T(eta), 0).
/// `batches_for(k)` supplies the batch stream of outer iteration k. A
/// divergent inner run skips that update and halves hyper_lr.
inline LrsOptResult lrs_opt(const Dynamics& dynamics, const OptimizerState& s0, const VecRef& eta_init,
                            const LrsOptSettings& settings,
                            const std::function<BatchStream(std::size_t)>& batches_for,
                            const BoundObjective& outer,
                            const std::function<void(std::size_t, double)>& on_iteration = {}) {
  require(eta_init.size() >= 1, "lrs_opt: empty initial schedule");
  require((eta_init.array() >= 0.0).all(), "lrs_opt: initial schedule must be >= 0");
  require(settings.hyper_lr > 0.0, "lrs_opt: hyper_lr must be positive");
  const double values = static_cast<double>(dynamics.state_dim()) * static_cast<double>(eta_init.size() + 1);
  if (values > settings.limits.max_trajectory_values)
    throw SizeGuardError("lrs_opt: instance too large for stored trajectories");

  LrsOptResult result{eta_init, {}, 0, settings.hyper_lr};
  result.history.reserve(settings.outer_iterations);
  for (std::size_t k = 0; k < settings.outer_iterations; ++k) {
    const Trajectory traj = run_trajectory(dynamics, s0, result.schedule, batches_for(k), outer);
    if (traj.diverged) {
      ++result.skipped;
      result.final_hyper_lr *= 0.5;
      result.history.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const Vector g = hypergrad_reverse(traj, dynamics, settings.limits);
    result.history.push_back(traj.final_val_loss);
    if (on_iteration) on_iteration(k, traj.final_val_loss);
    if (!g.allFinite()) {
      ++result.skipped;
      result.final_hyper_lr *= 0.5;
      continue;
    }
    result.schedule = (result.schedule - result.final_hyper_lr * g).cwiseMax(0.0);
  }
  return result;
}

}  // namespace lrsched
