/* Copyright 2026 The contextst Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include "contextst/coordinator.hpp"

#include <filesystem>

namespace contextst {

// Min/max scaling to [-1, 1]. Throws DataError for a constant series.
template <typename Derived>
Vector<typename Derived::Scalar> gaf_normalize(const Eigen::MatrixBase<Derived>& series) {
  using Scalar = typename Derived::Scalar;
  if (series.size() < 2) throw ShapeError("gaf: series needs at least two values");
  const Scalar lo = series.minCoeff();
  const Scalar hi = series.maxCoeff();
  if (!(hi > lo)) throw DataError("gaf: constant series cannot be normalized");
  Vector<Scalar> out = ((series.reshaped().array() - hi) + (series.reshaped().array() - lo)) / (hi - lo);
  return out.cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
}

// Gramian Angular (summation) Field from already normalized values:
// G(i, j) = x_i x_j - sqrt(1 - x_i^2) sqrt(1 - x_j^2).
template <typename Scalar>
Matrix<Scalar> gaf_from_normalized(const Vector<Scalar>& x) {
  const Vector<Scalar> s = (Scalar(1) - x.array().square()).max(Scalar(0)).sqrt();
  return x * x.transpose() - s * s.transpose();
}

template <typename Derived>
Matrix<typename Derived::Scalar> gaf(const Eigen::MatrixBase<Derived>& series) {
  return gaf_from_normalized(gaf_normalize(series));
}

// Same field through the angles: cos(acos(x_i) + acos(x_j)).
template <typename Derived>
Matrix<typename Derived::Scalar> gaf_trig(const Eigen::MatrixBase<Derived>& series) {
  using Scalar = typename Derived::Scalar;
  const Vector<Scalar> phi = gaf_normalize(series).array().acos();
  const Index n = phi.size();
  Matrix<Scalar> out(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) out(i, j) = std::cos(phi(i) + phi(j));
  }
  return out;
}

// One minus the normalized Shannon entropy of the power spectrum with the
// DC bin removed. Requires even length >= 4 and non-zero AC energy.
double forecastability(const Eigen::VectorXd& series);

// Comma-separated rows with full double precision.
void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path);

// Binary PGM (P5); values in [-1, 1] map linearly onto 0..255.
void write_pgm(const Eigen::MatrixXd& m, const std::filesystem::path& path);

}  // namespace contextst
