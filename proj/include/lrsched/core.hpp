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

/// @file core.hpp
/// Vector aliases, error types and small numeric helpers shared by every
/// lrsched header.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace lrsched {

/// Dense real vector of weights, tangents or schedules.
using Vector = Eigen::VectorXd;
using VecRef = Eigen::Ref<const Vector>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Invalid arguments (sizes, ranges, mismatched dimensions).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file (bad magic, bad header).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two inputs that must agree do not (e.g. image/label counts).
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value produced while evaluating a model or update.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Instance too large for the requested algorithm.
class SizeGuardError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ArgumentError(message);
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps comparisons of values
/// that are both numerically zero from blowing up.
inline double relative_error(double a, double b, double floor = 1e-300) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const VecRef& a, const VecRef& b, double floor = 1e-300) {
  const double scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

inline bool all_finite(const VecRef& v) { return v.allFinite(); }

}  // namespace lrsched
