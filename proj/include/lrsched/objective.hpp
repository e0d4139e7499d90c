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

/// @file objective.hpp
/// Differentiable objective interface and finite-difference oracles.

#pragma once

#include "lrsched/core.hpp"
#include "lrsched/data.hpp"

#include <memory>
#include <optional>
#include <string>
#include <utility>

namespace lrsched {

struct LossGrad {
  double loss;
  Vector grad;
};

struct GradHvp {
  Vector grad;
  Vector hvp;
};

/// Loss, gradient and Hessian-vector product on a flat weight vector.
///
/// Implementations are stateless: every call is a pure function of its
/// arguments. `hvp_transpose` is the transposed action of the Jacobian of
/// `grad`; it coincides with `hvp` for any twice differentiable loss and only
/// differs for gradient transforms such as clipping.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;

  virtual double loss(const VecRef& w, const Batch& batch) const = 0;
  virtual Vector grad(const VecRef& w, const Batch& batch) const = 0;
  virtual Vector hvp(const VecRef& w, const VecRef& v, const Batch& batch) const = 0;

  virtual Vector hvp_transpose(const VecRef& w, const VecRef& u, const Batch& batch) const {
    return hvp(w, u, batch);
  }

  virtual LossGrad loss_grad(const VecRef& w, const Batch& batch) const {
    return {loss(w, batch), grad(w, batch)};
  }

  virtual GradHvp grad_hvp(const VecRef& w, const VecRef& v, const Batch& batch) const {
    return {grad(w, batch), hvp(w, v, batch)};
  }

  virtual GradHvp grad_hvp_transpose(const VecRef& w, const VecRef& u, const Batch& batch) const {
    return {grad(w, batch), hvp_transpose(w, u, batch)};
  }

  /// Fraction of correctly classified rows; empty for non-classifiers.
  virtual std::optional<double> accuracy(const VecRef& /*w*/, const Batch& /*batch*/) const { return std::nullopt; }

 protected:
  void check_dim(const VecRef& w) const {
    if (static_cast<std::size_t>(w.size()) != dim())
      throw ArgumentError(name() + ": expected dimension " + std::to_string(dim()) + ", got " +
                          std::to_string(w.size()));
  }
};

using ObjectivePtr = std::shared_ptr<const Objective>;

/// An objective paired with the fixed batch it is evaluated on; this is how
/// the outer objective E (full validation set, or the whole analytic
/// function) is represented.
struct BoundObjective {
  ObjectivePtr objective;
  Batch batch;

  double loss(const VecRef& w) const { return objective->loss(w, batch); }
  Vector grad(const VecRef& w) const { return objective->grad(w, batch); }
  LossGrad loss_grad(const VecRef& w) const { return objective->loss_grad(w, batch); }
  std::optional<double> accuracy(const VecRef& w) const { return objective->accuracy(w, batch); }
};

/// Central differences of the gradient along v:
/// (grad(w + h v) - grad(w - h v)) / 2h.
inline Vector fd_hvp_oracle(const Objective& obj, const VecRef& w, const VecRef& v, const Batch& batch, double h) {
  require(h > 0.0, "fd_hvp_oracle: step must be positive");
  const Vector plus = w + h * v;
  const Vector minus = w - h * v;
  return (obj.grad(plus, batch) - obj.grad(minus, batch)) / (2.0 * h);
}

/// Central-difference derivative of the loss along coordinate i.
inline double fd_partial(const Objective& obj, const VecRef& w, std::size_t i, const Batch& batch, double h) {
  Vector plus = w;
  Vector minus = w;
  plus[static_cast<Eigen::Index>(i)] += h;
  minus[static_cast<Eigen::Index>(i)] -= h;
  return (obj.loss(plus, batch) - obj.loss(minus, batch)) / (2.0 * h);
}

}  // namespace lrsched
