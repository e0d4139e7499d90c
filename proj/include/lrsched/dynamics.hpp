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

/// @file dynamics.hpp
/// Optimizer update maps s' = Phi(s, eta; batch) on an augmented state
/// (weights followed by optimizer buffers), together with the products the
/// hypergradient machinery needs:
///
///   jvp(z)    = A z,     A = dPhi/ds
///   lr_col    = dPhi/deta
///   vjp(u)    = A^T u
///
/// Tangents and adjoints share the block layout of the state.

#pragma once

#include "lrsched/objective.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <utility>

namespace lrsched {

/// Weights and optimizer buffers stored as consecutive blocks of length
/// `dim`: [w] for SGD, [w | v] for SGDM, [w | m | v] for Adam.
struct OptimizerState {
  Vector values;
  std::size_t dim = 0;
  std::size_t step = 0;  // completed updates

  std::size_t state_dim() const { return static_cast<std::size_t>(values.size()); }
  auto weights() const { return values.head(static_cast<Eigen::Index>(dim)); }
  auto block(std::size_t k) const {
    return values.segment(static_cast<Eigen::Index>(k * dim), static_cast<Eigen::Index>(dim));
  }
  bool finite() const { return values.allFinite(); }

  friend bool operator==(const OptimizerState& a, const OptimizerState& b) {
    return a.dim == b.dim && a.step == b.step && a.values.size() == b.values.size() && a.values == b.values;
  }
};

class Dynamics;
using DynamicsPtr = std::shared_ptr<const Dynamics>;

class Dynamics {
 public:
  explicit Dynamics(ObjectivePtr objective) : objective_(std::move(objective)) {
    require(objective_ != nullptr, "dynamics: null objective");
  }
  virtual ~Dynamics() = default;

  virtual std::string name() const = 0;
  virtual std::size_t num_blocks() const = 0;
  /// Same update rule driven by another objective (used to wrap gradients).
  virtual DynamicsPtr rebind(ObjectivePtr objective) const = 0;

  const Objective& objective() const { return *objective_; }
  const ObjectivePtr& objective_ptr() const { return objective_; }
  std::size_t dim() const { return objective_->dim(); }
  std::size_t state_dim() const { return num_blocks() * dim(); }

  /// Weights w0 with zeroed buffers.
  OptimizerState initial_state(const VecRef& w0) const {
    require(static_cast<std::size_t>(w0.size()) == dim(), "dynamics: initial weights have wrong dimension");
    OptimizerState s;
    s.dim = dim();
    s.values = Vector::Zero(static_cast<Eigen::Index>(state_dim()));
    s.values.head(w0.size()) = w0;
    return s;
  }

  OptimizerState step(const OptimizerState& s, double eta, const Batch& batch) const {
    check_state(s);
    return advance(s, eta, objective_->grad(s.weights(), batch));
  }

  Vector lr_col(const OptimizerState& s, double /*eta*/, const Batch& batch) const {
    check_state(s);
    return lr_col_from(s, objective_->grad(s.weights(), batch));
  }

  Vector jvp(const OptimizerState& s, double eta, const Batch& batch, const VecRef& z) const {
    check_state(s);
    check_tangent(z);
    const GradHvp gh = objective_->grad_hvp(s.weights(), z.head(static_cast<Eigen::Index>(dim())), batch);
    return jvp_from(s, eta, gh.grad, gh.hvp, z);
  }

  Vector vjp(const OptimizerState& s, double eta, const Batch& batch, const VecRef& u) const {
    return pullback(s, eta, batch, u).transposed;
  }

  struct Propagated {
    OptimizerState next;
    Vector tangent;  // mu * A z + lr_col
  };

  /// One update plus the discounted tangent recursion, sharing a single
  /// gradient evaluation. With mu == 0 no Hessian product is formed and the
  /// tangent is exactly lr_col.
  Propagated propagate(const OptimizerState& s, double eta, const Batch& batch, const VecRef& z, double mu) const {
    check_state(s);
    check_tangent(z);
    if (mu == 0.0) {
      Vector g = objective_->grad(s.weights(), batch);
      Vector col = lr_col_from(s, g);
      return {advance(s, eta, g), std::move(col)};
    }
    const GradHvp gh = objective_->grad_hvp(s.weights(), z.head(static_cast<Eigen::Index>(dim())), batch);
    Vector tangent = mu * jvp_from(s, eta, gh.grad, gh.hvp, z);
    tangent += lr_col_from(s, gh.grad);
    return {advance(s, eta, gh.grad), std::move(tangent)};
  }

  struct Pulled {
    Vector transposed;  // A^T u
    double lr_dot;      // <lr_col, u>
  };

  /// Adjoint step of reverse accumulation.
  virtual Pulled pullback(const OptimizerState& s, double eta, const Batch& batch, const VecRef& u) const = 0;

 protected:
  virtual OptimizerState advance(const OptimizerState& s, double eta, const Vector& g) const = 0;
  virtual Vector lr_col_from(const OptimizerState& s, const Vector& g) const = 0;
  /// A z given the gradient g and hz = (dg/dw) z_w.
  virtual Vector jvp_from(const OptimizerState& s, double eta, const Vector& g, const Vector& hz,
                          const VecRef& z) const = 0;

  void check_state(const OptimizerState& s) const {
    if (s.dim != dim() || s.state_dim() != state_dim())
      throw ArgumentError(name() + ": state has dimension " + std::to_string(s.state_dim()) + ", expected " +
                          std::to_string(state_dim()));
  }
  void check_tangent(const VecRef& z) const {
    if (static_cast<std::size_t>(z.size()) != state_dim())
      throw ArgumentError(name() + ": tangent has dimension " + std::to_string(z.size()) + ", expected " +
                          std::to_string(state_dim()));
  }

  Eigen::Index d() const { return static_cast<Eigen::Index>(dim()); }

 private:
  ObjectivePtr objective_;
};

// ---------------------------------------------------------------------------

/// w' = w - eta g.  A = I - eta H, lr_col = -g.
class SgdDynamics final : public Dynamics {
 public:
  using Dynamics::Dynamics;

  std::string name() const override { return "sgd"; }
  std::size_t num_blocks() const override { return 1; }
  DynamicsPtr rebind(ObjectivePtr objective) const override { return std::make_shared<SgdDynamics>(std::move(objective)); }

  Pulled pullback(const OptimizerState& s, double eta, const Batch& batch, const VecRef& u) const override {
    check_state(s);
    check_tangent(u);
    const GradHvp gh = objective().grad_hvp_transpose(s.weights(), u, batch);
    return {u - eta * gh.hvp, -gh.grad.dot(u)};
  }

 protected:
  OptimizerState advance(const OptimizerState& s, double eta, const Vector& g) const override {
    OptimizerState next{s.values - eta * g, s.dim, s.step + 1};
    return next;
  }
  Vector lr_col_from(const OptimizerState&, const Vector& g) const override { return -g; }
  Vector jvp_from(const OptimizerState&, double eta, const Vector&, const Vector& hz, const VecRef& z) const override {
    return z - eta * hz;
  }
};

/// Heavy ball: v' = rho v + g, w' = w - eta v'.
class SgdmDynamics final : public Dynamics {
 public:
  SgdmDynamics(ObjectivePtr objective, double rho) : Dynamics(std::move(objective)), rho_(rho) {
    require(rho >= 0.0 && rho < 1.0, "sgdm: momentum must be in [0, 1)");
  }

  std::string name() const override { return "sgdm"; }
  std::size_t num_blocks() const override { return 2; }
  double momentum() const { return rho_; }
  DynamicsPtr rebind(ObjectivePtr objective) const override {
    return std::make_shared<SgdmDynamics>(std::move(objective), rho_);
  }

  // A = [[I - eta H, -eta rho I], [H, rho I]], so with r = u_v - eta u_w:
  // A^T u = (u_w + H r, rho r).
  Pulled pullback(const OptimizerState& s, double eta, const Batch& batch, const VecRef& u) const override {
    check_state(s);
    check_tangent(u);
    const auto u_w = u.head(d());
    const Vector r = u.tail(d()) - eta * u_w;
    const GradHvp gh = objective().grad_hvp_transpose(s.weights(), r, batch);
    Vector out(u.size());
    out.head(d()) = u_w + gh.hvp;
    out.tail(d()) = rho_ * r;
    const Vector v_next = rho_ * s.block(1) + gh.grad;
    return {std::move(out), -v_next.dot(u_w)};
  }

 protected:
  OptimizerState advance(const OptimizerState& s, double eta, const Vector& g) const override {
    OptimizerState next{Vector(s.values.size()), s.dim, s.step + 1};
    const Vector v_next = rho_ * s.block(1) + g;
    next.values.head(d()) = s.weights() - eta * v_next;
    next.values.tail(d()) = v_next;
    return next;
  }
  Vector lr_col_from(const OptimizerState& s, const Vector& g) const override {
    Vector col = Vector::Zero(s.values.size());
    col.head(d()) = -(rho_ * s.block(1) + g);
    return col;
  }
  Vector jvp_from(const OptimizerState&, double eta, const Vector&, const Vector& hz, const VecRef& z) const override {
    Vector out(z.size());
    const Vector zv_next = rho_ * z.tail(d()) + hz;
    out.head(d()) = z.head(d()) - eta * zv_next;
    out.tail(d()) = zv_next;
    return out;
  }

 private:
  double rho_;
};

/// Adam with bias correction and eps outside the square root:
///   m' = b1 m + (1-b1) g,  v' = b2 v + (1-b2) g.g,
///   w' = w - eta mhat / (sqrt(vhat) + eps).
/// The step counter enters only through the (constant) bias corrections.
/// Where vhat == 0 the square root is not differentiable; its derivative is
/// taken as 0 there.
class AdamDynamics final : public Dynamics {
 public:
  AdamDynamics(ObjectivePtr objective, double beta1, double beta2, double eps)
      : Dynamics(std::move(objective)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    require(beta1 >= 0.0 && beta1 < 1.0, "adam: beta1 must be in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, "adam: beta2 must be in [0, 1)");
    require(eps > 0.0, "adam: eps must be positive");
  }

  std::string name() const override { return "adam"; }
  std::size_t num_blocks() const override { return 3; }
  DynamicsPtr rebind(ObjectivePtr objective) const override {
    return std::make_shared<AdamDynamics>(std::move(objective), beta1_, beta2_, eps_);
  }

  Pulled pullback(const OptimizerState& s, double eta, const Batch& batch, const VecRef& u) const override {
    check_state(s);
    check_tangent(u);
    const Vector g = objective().grad(s.weights(), batch);
    const Partials p = partials(s, eta, g);
    const auto u_w = u.head(d());
    const Vector um = u.segment(d(), d()) + p.dw_dm.cwiseProduct(u_w);
    const Vector uv = u.tail(d()) + p.dw_dv.cwiseProduct(u_w);
    const Vector r = (1.0 - beta1_) * um + (2.0 * (1.0 - beta2_)) * g.cwiseProduct(uv);
    Vector out(u.size());
    out.head(d()) = u_w + objective().hvp_transpose(s.weights(), r, batch);
    out.segment(d(), d()) = beta1_ * um;
    out.tail(d()) = beta2_ * uv;
    return {std::move(out), p.lr_col_w.dot(u_w)};
  }

 protected:
  OptimizerState advance(const OptimizerState& s, double eta, const Vector& g) const override {
    const Moments mo = moments(s, g);
    OptimizerState next{Vector(s.values.size()), s.dim, s.step + 1};
    next.values.head(d()) = s.weights() - eta * (mo.m_hat.array() / (mo.v_hat.array().sqrt() + eps_)).matrix();
    next.values.segment(d(), d()) = mo.m;
    next.values.tail(d()) = mo.v;
    return next;
  }

  Vector lr_col_from(const OptimizerState& s, const Vector& g) const override {
    const Moments mo = moments(s, g);
    Vector col = Vector::Zero(s.values.size());
    col.head(d()) = -(mo.m_hat.array() / (mo.v_hat.array().sqrt() + eps_)).matrix();
    return col;
  }

  Vector jvp_from(const OptimizerState& s, double eta, const Vector& g, const Vector& hz,
                  const VecRef& z) const override {
    const Partials p = partials(s, eta, g);
    const Vector dm = beta1_ * z.segment(d(), d()) + (1.0 - beta1_) * hz;
    const Vector dv = beta2_ * z.tail(d()) + (2.0 * (1.0 - beta2_)) * g.cwiseProduct(hz);
    Vector out(z.size());
    out.head(d()) = z.head(d()) + p.dw_dm.cwiseProduct(dm) + p.dw_dv.cwiseProduct(dv);
    out.segment(d(), d()) = dm;
    out.tail(d()) = dv;
    return out;
  }

 private:
  struct Moments {
    Vector m, v, m_hat, v_hat;
    double c1, c2;
  };

  struct Partials {
    Vector dw_dm;     // d w' / d m'
    Vector dw_dv;     // d w' / d v'
    Vector lr_col_w;  // d w' / d eta
  };

  Moments moments(const OptimizerState& s, const Vector& g) const {
    Moments mo;
    const double t = static_cast<double>(s.step + 1);
    mo.c1 = 1.0 - std::pow(beta1_, t);
    mo.c2 = 1.0 - std::pow(beta2_, t);
    mo.m = beta1_ * s.block(1) + (1.0 - beta1_) * g;
    mo.v = beta2_ * s.block(2) + (1.0 - beta2_) * g.cwiseProduct(g);
    mo.m_hat = mo.m / mo.c1;
    mo.v_hat = mo.v / mo.c2;
    return mo;
  }

  Partials partials(const OptimizerState& s, double eta, const Vector& g) const {
    const Moments mo = moments(s, g);
    const Eigen::ArrayXd root = mo.v_hat.array().sqrt();
    const Eigen::ArrayXd den = root + eps_;
    Partials p;
    p.lr_col_w = -(mo.m_hat.array() / den).matrix();
    p.dw_dm = ((-eta / mo.c1) / den).matrix();
    p.dw_dv = (root > 0.0).select(eta * mo.m_hat.array() / (den.square() * 2.0 * root * mo.c2), 0.0).matrix();
    return p;
  }

  double beta1_;
  double beta2_;
  double eps_;
};

// ---------------------------------------------------------------------------

/// Gradient clamped elementwise to [-clip, clip]. Its Jacobian is D H with
/// D = diag(|g_i| < clip): saturated coordinates get derivative 0.
class ClippedGradientObjective final : public Objective {
 public:
  ClippedGradientObjective(ObjectivePtr inner, double clip) : inner_(std::move(inner)), clip_(clip) {
    require(inner_ != nullptr, "clip: null objective");
    require(clip > 0.0, "clip: threshold must be positive");
  }

  std::size_t dim() const override { return inner_->dim(); }
  std::string name() const override { return inner_->name() + "+clip"; }
  double clip() const { return clip_; }

  double loss(const VecRef& w, const Batch& batch) const override { return inner_->loss(w, batch); }
  Vector grad(const VecRef& w, const Batch& batch) const override { return clamp(inner_->grad(w, batch)); }
  LossGrad loss_grad(const VecRef& w, const Batch& batch) const override {
    LossGrad lg = inner_->loss_grad(w, batch);
    lg.grad = clamp(lg.grad);
    return lg;
  }

  Vector hvp(const VecRef& w, const VecRef& v, const Batch& batch) const override {
    return grad_hvp(w, v, batch).hvp;
  }
  GradHvp grad_hvp(const VecRef& w, const VecRef& v, const Batch& batch) const override {
    GradHvp gh = inner_->grad_hvp(w, v, batch);
    gh.hvp = gh.hvp.cwiseProduct(mask(gh.grad));
    gh.grad = clamp(gh.grad);
    return gh;
  }

  Vector hvp_transpose(const VecRef& w, const VecRef& u, const Batch& batch) const override {
    return grad_hvp_transpose(w, u, batch).hvp;
  }
  GradHvp grad_hvp_transpose(const VecRef& w, const VecRef& u, const Batch& batch) const override {
    const Vector g = inner_->grad(w, batch);
    Vector hv = inner_->hvp_transpose(w, u.cwiseProduct(mask(g)), batch);
    return {clamp(g), std::move(hv)};
  }

  std::optional<double> accuracy(const VecRef& w, const Batch& batch) const override {
    return inner_->accuracy(w, batch);
  }

 private:
  Vector clamp(const Vector& g) const { return g.cwiseMax(-clip_).cwiseMin(clip_); }
  Vector mask(const Vector& g) const { return (g.array().abs() < clip_).cast<double>().matrix(); }

  ObjectivePtr inner_;
  double clip_;
};

inline DynamicsPtr sgd_dynamics(ObjectivePtr objective) { return std::make_shared<SgdDynamics>(std::move(objective)); }

inline DynamicsPtr sgdm_dynamics(ObjectivePtr objective, double rho) {
  return std::make_shared<SgdmDynamics>(std::move(objective), rho);
}

inline DynamicsPtr adam_dynamics(ObjectivePtr objective, double beta1 = 0.9, double beta2 = 0.999,
                                 double eps = 1e-8) {
  return std::make_shared<AdamDynamics>(std::move(objective), beta1, beta2, eps);
}

inline DynamicsPtr clipped_dynamics(const Dynamics& inner, double clip) {
  return inner.rebind(std::make_shared<ClippedGradientObjective>(inner.objective_ptr(), clip));
}

}  // namespace lrsched
