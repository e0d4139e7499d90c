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

/// @file problems.hpp
/// Analytic objectives: diagonal quadratics and the 2-D Beale and smoothed
/// Bukin N.6 test functions. The batch argument is ignored by all of them.

#pragma once

#include "lrsched/objective.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace lrsched {

/// L(w) = 1/2 sum_i a_i w_i^2.
class QuadraticObjective final : public Objective {
 public:
  explicit QuadraticObjective(Vector diag) : diag_(std::move(diag)) {
    require(diag_.size() > 0, "quadratic: empty diagonal");
    require((diag_.array() >= 0.0).all(), "quadratic: diagonal entries must be >= 0");
  }

  std::size_t dim() const override { return static_cast<std::size_t>(diag_.size()); }
  std::string name() const override { return "quadratic"; }
  const Vector& diagonal() const { return diag_; }

  double loss(const VecRef& w, const Batch&) const override {
    check_dim(w);
    return 0.5 * (diag_.array() * w.array().square()).sum();
  }
  Vector grad(const VecRef& w, const Batch&) const override {
    check_dim(w);
    return diag_.cwiseProduct(w);
  }
  Vector hvp(const VecRef& w, const VecRef& v, const Batch&) const override {
    check_dim(w);
    check_dim(v);
    return diag_.cwiseProduct(v);
  }

 private:
  Vector diag_;
};

/// Beale function
///   L(x, y) = (1.5 - x + xy)^2 + (2.25 - x + xy^2)^2 + (2.625 - x + xy^3)^2
/// with global minimum 0 at (3, 0.5).
class BealeObjective final : public Objective {
 public:
  std::size_t dim() const override { return 2; }
  std::string name() const override { return "beale"; }

  double loss(const VecRef& w, const Batch&) const override {
    check_dim(w);
    const Terms t(w[0], w[1]);
    return t.r1 * t.r1 + t.r2 * t.r2 + t.r3 * t.r3;
  }

  Vector grad(const VecRef& w, const Batch&) const override {
    check_dim(w);
    const Terms t(w[0], w[1]);
    Vector g(2);
    g[0] = 2.0 * (t.r1 * t.dx1 + t.r2 * t.dx2 + t.r3 * t.dx3);
    g[1] = 2.0 * (t.r1 * t.dy1 + t.r2 * t.dy2 + t.r3 * t.dy3);
    return g;
  }

  Vector hvp(const VecRef& w, const VecRef& v, const Batch&) const override {
    check_dim(w);
    check_dim(v);
    return hessian(w[0], w[1]) * v;
  }

  static Eigen::Matrix2d hessian(double x, double y) {
    const Terms t(x, y);
    Eigen::Matrix2d h;
    // Gauss-Newton part plus residual-weighted second derivatives.
    h(0, 0) = 2.0 * (t.dx1 * t.dx1 + t.dx2 * t.dx2 + t.dx3 * t.dx3);
    h(0, 1) = 2.0 * (t.dx1 * t.dy1 + t.dx2 * t.dy2 + t.dx3 * t.dy3 + t.r1 * 1.0 + t.r2 * 2.0 * y +
                     t.r3 * 3.0 * y * y);
    h(1, 0) = h(0, 1);
    h(1, 1) = 2.0 * (t.dy1 * t.dy1 + t.dy2 * t.dy2 + t.dy3 * t.dy3 + t.r2 * 2.0 * x + t.r3 * 6.0 * x * y);
    return h;
  }

 private:
  struct Terms {
    Terms(double x, double y)
        : r1(1.5 - x + x * y),
          r2(2.25 - x + x * y * y),
          r3(2.625 - x + x * y * y * y),
          dx1(y - 1.0),
          dx2(y * y - 1.0),
          dx3(y * y * y - 1.0),
          dy1(x),
          dy2(2.0 * x * y),
          dy3(3.0 * x * y * y) {}
    double r1, r2, r3;
    double dx1, dx2, dx3;
    double dy1, dy2, dy3;
  };
};

/// Smoothed, simplified Bukin N.6:
///   L(x, y) = sqrt( sqrt((y - 0.01 x)^2 + eps) + eps ).
/// Constant along the valley y = 0.01 x, strictly larger off it.
class BukinSmoothedObjective final : public Objective {
 public:
  explicit BukinSmoothedObjective(double eps = 1e-3) : eps_(eps) {
    require(eps > 0.0, "bukin: eps must be positive");
  }

  std::size_t dim() const override { return 2; }
  std::string name() const override { return "bukin"; }
  double eps() const { return eps_; }

  double loss(const VecRef& w, const Batch&) const override {
    check_dim(w);
    const Parts p = parts(w);
    return std::sqrt(p.outer);
  }

  Vector grad(const VecRef& w, const Batch&) const override {
    check_dim(w);
    const Parts p = parts(w);
    const double dl_du = p.u / (2.0 * std::sqrt(p.outer) * p.inner);
    return dl_du * valley_normal();
  }

  Vector hvp(const VecRef& w, const VecRef& v, const Batch&) const override {
    check_dim(w);
    check_dim(v);
    const Parts p = parts(w);
    const double sp = std::sqrt(p.outer);
    const double u2 = p.u * p.u;
    const double d2l_du2 = 1.0 / (2.0 * sp * p.inner) - u2 / (4.0 * p.outer * sp * p.inner * p.inner) -
                           u2 / (2.0 * sp * p.inner * p.inner * p.inner);
    const Vector c = valley_normal();
    return (d2l_du2 * c.dot(v)) * c;
  }

 private:
  struct Parts {
    double u;      // y - 0.01 x
    double inner;  // sqrt(u^2 + eps)
    double outer;  // inner + eps
  };

  Parts parts(const VecRef& w) const {
    const double u = w[1] - 0.01 * w[0];
    const double inner = std::sqrt(u * u + eps_);
    return {u, inner, inner + eps_};
  }

  static Vector valley_normal() {
    Vector c(2);
    c << -0.01, 1.0;
    return c;
  }

  double eps_;
};

inline ObjectivePtr quadratic_objective(Vector diag) {
  return std::make_shared<QuadraticObjective>(std::move(diag));
}
inline ObjectivePtr beale_objective() { return std::make_shared<BealeObjective>(); }
inline ObjectivePtr bukin_smoothed_objective(double eps = 1e-3) {
  return std::make_shared<BukinSmoothedObjective>(eps);
}

}  // namespace lrsched
