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

/// @file schedulers.hpp
/// Online learning-rate schedulers.
///
/// MARTHE keeps a discounted tangent Z over the optimizer state,
///
///   Z_0 = 0,   Z_{t+1} = mu A_t Z_t + dPhi_t/deta_t,
///
/// and at every step t > 0 moves the learning rate against the estimated
/// hypergradient  eta_t = max(eta_{t-1} - beta <Z_t, grad E(w_t)>, 0).
/// mu = 0 gives hypergradient descent (HD, one-step horizon); mu = 1 gives
/// real-time hyperparameter optimization (RTHO, the whole past trajectory).

#pragma once

#include "lrsched/dynamics.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>

namespace lrsched {

// ---------------------------------------------------------------------------
// Gradient of the outer objective E

enum class ValGradMode { kFullValidation, kFreshMinibatch };

/// Where grad E(w_t) comes from: the whole validation set (deterministic in
/// w) or a fresh validation mini-batch per call.
class ValGradSource {
 public:
  static ValGradSource full(BoundObjective target) {
    ValGradSource src;
    src.mode_ = ValGradMode::kFullValidation;
    src.target_ = std::move(target);
    return src;
  }

  static ValGradSource minibatch(ObjectivePtr objective, DatasetPtr validation, BatchSampler sampler) {
    ValGradSource src;
    src.mode_ = ValGradMode::kFreshMinibatch;
    src.target_ = BoundObjective{std::move(objective), Batch{}};
    src.validation_ = std::move(validation);
    src.sampler_.emplace(std::move(sampler));
    return src;
  }

  ValGradMode mode() const { return mode_; }
  const BoundObjective& target() const { return target_; }

  LossGrad evaluate(const VecRef& w) {
    if (mode_ == ValGradMode::kFullValidation) return target_.loss_grad(w);
    return target_.objective->loss_grad(w, next_batch(*sampler_, validation_));
  }

  Vector gradient(const VecRef& w) { return evaluate(w).grad; }

 private:
  ValGradMode mode_ = ValGradMode::kFullValidation;
  BoundObjective target_;
  DatasetPtr validation_;
  std::optional<BatchSampler> sampler_;
};

// ---------------------------------------------------------------------------
// Building blocks

/// <w-block of Z, grad E(w_t)>.
inline double marthe_delta(const VecRef& z, const VecRef& val_grad) {
  require(z.size() >= val_grad.size() && val_grad.size() > 0 && z.size() % val_grad.size() == 0,
          "marthe_delta: tangent of size " + std::to_string(z.size()) + " does not match gradient of size " +
              std::to_string(val_grad.size()));
  return z.head(val_grad.size()).dot(val_grad);
}

/// max(eta - beta delta, 0).
inline double hyper_update(double eta, double delta, double beta) { return std::max(eta - beta * delta, 0.0); }

/// mu A Z + lr_col at (s, eta, batch).
inline Vector marthe_tangent_update(const VecRef& z, double mu, const Dynamics& dynamics, const OptimizerState& s,
                                    double eta, const Batch& batch) {
  return dynamics.propagate(s, eta, batch, z, mu).tangent;
}

struct SchedulerState {
  double eta = 0.0;
  Vector z;
  double beta = 0.0;
  double mu = 0.0;
  std::size_t step = 0;
  double last_delta = 0.0;  // delta used at the most recent LR update

  static SchedulerState start(double eta0, double beta, double mu, std::size_t state_dim) {
    require(eta0 >= 0.0, "scheduler: eta0 must be >= 0");
    require(beta >= 0.0, "scheduler: beta must be >= 0");
    require(mu >= 0.0 && mu <= 1.0, "scheduler: mu must be in [0, 1]");
    return {eta0, Vector::Zero(static_cast<Eigen::Index>(state_dim)), beta, mu, 0, 0.0};
  }
};

struct MartheStep {
  SchedulerState scheduler;
  OptimizerState state;
  bool diverged = false;
  std::string diagnostic;
  std::optional<double> val_loss;  // E(w_t) when it was evaluated for the update
};

/// One iteration of the MARTHE loop at step t = scheduler.step:
///   (i)   t > 0: eta_t = hyper_update(eta_{t-1}, <Z_t, grad E(w_t)>, beta)
///   (ii)  Z_{t+1} = mu A_t Z_t + lr_col_t
///   (iii) s_{t+1} = Phi_t(s_t, eta_t)
/// Non-finite values end the run with `diverged` set instead of throwing.
inline MartheStep marthe_step(const SchedulerState& scheduler, const Dynamics& dynamics, const OptimizerState& s,
                              const Batch& train_batch, ValGradSource& val_grad) {
  MartheStep out{scheduler, s, false, {}, std::nullopt};
  try {
    if (scheduler.step > 0) {
      const LossGrad e = val_grad.evaluate(s.weights());
      out.val_loss = e.loss;
      const double delta = marthe_delta(scheduler.z, e.grad);
      out.scheduler.last_delta = delta;
      out.scheduler.eta = hyper_update(scheduler.eta, delta, scheduler.beta);
      if (!std::isfinite(delta) || !std::isfinite(out.scheduler.eta)) {
        out.diverged = true;
        out.diagnostic = "non-finite learning-rate update at step " + std::to_string(scheduler.step);
        return out;
      }
    }
    auto next = dynamics.propagate(s, out.scheduler.eta, train_batch, scheduler.z, scheduler.mu);
    out.scheduler.z = std::move(next.tangent);
    out.state = std::move(next.next);
    out.scheduler.step = scheduler.step + 1;
    if (!out.state.finite() || !out.scheduler.z.allFinite()) {
      out.diverged = true;
      out.diagnostic = "non-finite state after step " + std::to_string(scheduler.step);
    }
  } catch (const NumericError& e) {
    out.diverged = true;
    out.diagnostic = e.what();
  }
  return out;
}

/// <lr_col(s_{t-1}, eta_{t-1}, batch_{t-1}), grad E(w_t)>.
inline double hd_delta(const Dynamics& dynamics, const OptimizerState& s_prev, double eta_prev,
                       const Batch& batch_prev, const VecRef& val_grad) {
  return marthe_delta(dynamics.lr_col(s_prev, eta_prev, batch_prev), val_grad);
}

/// HD stepping written directly in terms of hd_delta, without a tangent.
struct HdState {
  double eta = 0.0;
  double beta = 0.0;
  std::size_t step = 0;
  double last_delta = 0.0;
  std::optional<OptimizerState> prev_state;
  Batch prev_batch;
  double prev_eta = 0.0;
};

struct HdStep {
  HdState scheduler;
  OptimizerState state;
  bool diverged = false;
};

inline HdStep hd_step(const HdState& hd, const Dynamics& dynamics, const OptimizerState& s, const Batch& train_batch,
                      ValGradSource& val_grad) {
  HdStep out{hd, s, false};
  try {
    if (hd.step > 0) {
      const Vector ge = val_grad.gradient(s.weights());
      const double delta = hd_delta(dynamics, *hd.prev_state, hd.prev_eta, hd.prev_batch, ge);
      out.scheduler.last_delta = delta;
      out.scheduler.eta = hyper_update(hd.eta, delta, hd.beta);
    }
    out.scheduler.prev_state = s;
    out.scheduler.prev_batch = train_batch;
    out.scheduler.prev_eta = out.scheduler.eta;
    out.state = dynamics.step(s, out.scheduler.eta, train_batch);
    out.scheduler.step = hd.step + 1;
    out.diverged = !out.state.finite() || !std::isfinite(out.scheduler.eta);
  } catch (const NumericError&) {
    out.diverged = true;
  }
  return out;
}

/// RTHO delta at step t from an explicit sum over the stored prefix:
///   [ sum_{i<t} A_{t-1} ... A_{i+1} lr_col_i ]^T grad E(w_t).
/// Every column is pushed forward separately, so this costs O(t^2) Jacobian
/// products and is meant as a test oracle for the recursive tangent.
inline double rtho_delta_direct(const Dynamics& dynamics, std::span<const OptimizerState> states,
                                std::span<const double> etas, std::span<const Batch> batches,
                                const VecRef& val_grad) {
  const std::size_t t = etas.size();
  require(batches.size() == t && states.size() >= t, "rtho_delta_direct: inconsistent prefix lengths");
  Vector total = Vector::Zero(static_cast<Eigen::Index>(dynamics.state_dim()));
  for (std::size_t i = 0; i < t; ++i) {
    Vector col = dynamics.lr_col(states[i], etas[i], batches[i]);
    for (std::size_t j = i + 1; j < t; ++j) col = dynamics.jvp(states[j], etas[j], batches[j], col);
    total += col;
  }
  return marthe_delta(total, val_grad);
}

/// eta_t = eta0 gamma^t.
struct ExponentialSchedule {
  double eta0;
  double gamma;

  ExponentialSchedule(double eta0_, double gamma_) : eta0(eta0_), gamma(gamma_) {
    require(eta0 > 0.0, "exponential: eta0 must be positive");
    require(gamma > 0.0 && gamma <= 1.0, "exponential: gamma must be in (0, 1]");
  }

  double operator()(std::size_t t) const { return eta0 * std::pow(gamma, static_cast<double>(t)); }
};

inline ExponentialSchedule exponential_schedule(double eta0, double gamma) { return {eta0, gamma}; }

}  // namespace lrsched
