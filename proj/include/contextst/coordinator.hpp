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

// Spectral coordinate system for a lookback window: moving-average
// detrending, one-sided spectrum with energy-balanced band boundaries,
// band-limited reconstruction and patching.

#include "contextst/common.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <complex>
#include <string>
#include <vector>

namespace contextst {

template <typename Scalar>
struct TrendSplit {
  Vector<Scalar> trend;
  Vector<Scalar> detrended;
};

// Centered moving average of width 2*kappa+1. Edges use replicate padding so
// the trend has the input's length.
template <typename Derived>
TrendSplit<typename Derived::Scalar> detrend(const Eigen::MatrixBase<Derived>& series,
                                            Index kappa) {
  using Scalar = typename Derived::Scalar;
  const Index L = series.size();
  if (kappa < 0) throw ConfigError("moving-average half-width must be >= 0");
  if (2 * kappa + 1 > L) {
    throw ConfigError("moving-average window 2*kappa+1=" + std::to_string(2 * kappa + 1) +
                      " exceeds series length " + std::to_string(L));
  }
  TrendSplit<Scalar> out;
  out.trend.resize(L);
  const Scalar width = static_cast<Scalar>(2 * kappa + 1);
  for (Index t = 0; t < L; ++t) {
    Scalar acc(0);
    for (Index j = -kappa; j <= kappa; ++j) {
      const Index i = std::clamp<Index>(t + j, 0, L - 1);
      acc += series(i);
    }
    out.trend(t) = acc / width;
  }
  out.detrended = series - out.trend;
  return out;
}

template <typename Scalar>
struct Spectrum {
  Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> coeffs;
  Vector<Scalar> psd;
  Vector<Scalar> cpsd;  // zero-filled when degenerate
  Index length = 0;     // time-domain length L
  bool degenerate = false;

  Index bins() const { return coeffs.size(); }
};

// Total PSD below this is treated as a zero-energy signal.
inline constexpr double kDegenerateEnergy = 1e-12;

template <typename Scalar>
Eigen::FFT<Scalar>& fft_engine() {
  thread_local Eigen::FFT<Scalar> engine = [] {
    Eigen::FFT<Scalar> f;
    f.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
    return f;
  }();
  return engine;
}

template <typename Derived>
Spectrum<typename Derived::Scalar> spectrum(const Eigen::MatrixBase<Derived>& detrended) {
  using Scalar = typename Derived::Scalar;
  const Index L = detrended.size();
  if (L < 4 || L % 2 != 0) {
    throw ConfigError("spectrum requires an even length >= 4, got " + std::to_string(L));
  }
  Spectrum<Scalar> s;
  s.length = L;
  const Vector<Scalar> x = detrended;
  fft_engine<Scalar>().fwd(s.coeffs, x);
  const Index B = L / 2 + 1;
  s.psd.resize(B);
  for (Index p = 0; p < B; ++p) {
    const Scalar power = std::norm(s.coeffs(p));
    s.psd(p) = (p == 0 || p == L / 2) ? power / Scalar(L) : power / Scalar(L / 2);
  }
  const Scalar total = s.psd.sum();
  s.cpsd.setZero(B);
  if (!(total >= Scalar(kDegenerateEnergy))) {
    s.degenerate = true;
    return s;
  }
  Scalar running(0);
  for (Index p = 0; p < B; ++p) {
    running += s.psd(p);
    s.cpsd(p) = running / total;
  }
  s.cpsd(B - 1) = Scalar(1);
  return s;
}

// Pushes each boundary at least one bin past its predecessor, clamped to the
// bin count, so K stays fixed and the masks still partition the bins.
inline void resolve_duplicate_boundaries(std::vector<Index>& boundaries) {
  const Index bins = boundaries.back();
  for (std::size_t k = 1; k + 1 < boundaries.size(); ++k) {
    boundaries[k] = std::min(bins, std::max(boundaries[k], boundaries[k - 1] + 1));
  }
}

// Returns K+1 boundaries; band k covers bins [b[k-1], b[k]).
template <typename Scalar>
std::vector<Index> select_boundaries(const Spectrum<Scalar>& spec, Index K) {
  const Index B = spec.bins();
  if (K < 1 || K > spec.length / 2) {
    throw ConfigError("component count K=" + std::to_string(K) + " must lie in [1, " +
                      std::to_string(spec.length / 2) + "]");
  }
  std::vector<Index> b(static_cast<std::size_t>(K + 1));
  b.front() = 0;
  b.back() = B;
  for (Index k = 1; k < K; ++k) {
    if (spec.degenerate) {
      b[static_cast<std::size_t>(k)] = k * B / K;
      continue;
    }
    const Scalar level = Scalar(k) / Scalar(K);
    // cpsd is nondecreasing: first index reaching the level.
    const auto* first = spec.cpsd.data();
    const auto* hit = std::lower_bound(first, first + B, level);
    b[static_cast<std::size_t>(k)] = std::min<Index>(hit - first, B - 1);
  }
  resolve_duplicate_boundaries(b);
  return b;
}

// Time-domain reconstruction of each band.
template <typename Scalar>
std::vector<Vector<Scalar>> decompose(const Spectrum<Scalar>& spec,
                                      const std::vector<Index>& boundaries) {
  const Index B = spec.bins();
  if (boundaries.size() < 2 || boundaries.front() != 0 || boundaries.back() != B) {
    throw ConfigError("band boundaries must start at 0 and end at the bin count");
  }
  std::vector<Vector<Scalar>> components;
  components.reserve(boundaries.size() - 1);
  Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> masked(B);
  for (std::size_t k = 1; k < boundaries.size(); ++k) {
    if (boundaries[k] < boundaries[k - 1]) throw ConfigError("band boundaries must be nondecreasing");
    masked.setZero();
    const Index lo = boundaries[k - 1];
    const Index hi = boundaries[k];
    if (hi == lo) {
      components.push_back(Vector<Scalar>::Zero(spec.length));
      continue;
    }
    masked.segment(lo, hi - lo) = spec.coeffs.segment(lo, hi - lo);
    Vector<Scalar> out;
    fft_engine<Scalar>().inv(out, masked, spec.length);
    components.push_back(std::move(out));
  }
  return components;
}

template <typename Derived>
std::vector<Vector<typename Derived::Scalar>> decompose(const Eigen::MatrixBase<Derived>& detrended,
                                                        const std::vector<Index>& boundaries) {
  return decompose(spectrum(detrended), boundaries);
}

// Fraction of total PSD inside each band (all zero for degenerate spectra).
template <typename Scalar>
std::vector<Scalar> band_energy(const Spectrum<Scalar>& spec, const std::vector<Index>& boundaries) {
  const Scalar total = spec.psd.sum();
  std::vector<Scalar> out;
  for (std::size_t k = 1; k < boundaries.size(); ++k) {
    const Scalar e = spec.psd.segment(boundaries[k - 1], boundaries[k] - boundaries[k - 1]).sum();
    out.push_back(spec.degenerate ? Scalar(0) : e / total);
  }
  return out;
}

// (K+1) x N x P patches stored as a ((K+1)*N) x P matrix, component-major.
template <typename Scalar>
struct PatchGrid {
  Matrix<Scalar> patches;
  Index components = 0;  // K+1
  Index count = 0;       // N
  Index length = 0;      // P

  auto patch(Index k, Index n) const { return patches.row(k * count + n); }
  Index num_decomposed() const { return components - 1; }
};

template <typename Scalar>
PatchGrid<Scalar> patch(const std::vector<Vector<Scalar>>& series, Index P) {
  if (P < 1) throw ConfigError("patch length must be positive");
  if (series.empty()) throw ConfigError("patch needs at least one series");
  const Index L = series.front().size();
  const Index N = (L + P - 1) / P;
  PatchGrid<Scalar> grid;
  grid.components = static_cast<Index>(series.size());
  grid.count = N;
  grid.length = P;
  grid.patches.resize(grid.components * N, P);
  for (Index k = 0; k < grid.components; ++k) {
    const auto& x = series[static_cast<std::size_t>(k)];
    if (x.size() != L) throw ShapeError("patch: series lengths differ");
    for (Index n = 0; n < N; ++n) {
      for (Index j = 0; j < P; ++j) {
        const Index t = std::min(n * P + j, L - 1);
        grid.patches(k * N + n, j) = x(t);
      }
    }
  }
  return grid;
}

// Concatenates row k's patches and truncates to `length`.
template <typename Scalar>
Vector<Scalar> unpatch(const PatchGrid<Scalar>& grid, Index k, Index length) {
  Vector<Scalar> out(grid.count * grid.length);
  for (Index n = 0; n < grid.count; ++n) {
    out.segment(n * grid.length, grid.length) = grid.patch(k, n).transpose();
  }
  return out.head(length);
}

template <typename Scalar>
struct Decomposition {
  Vector<Scalar> original;
  Vector<Scalar> trend;
  Vector<Scalar> detrended;
  Spectrum<Scalar> spectrum;
  std::vector<Index> boundaries;
  std::vector<Vector<Scalar>> components;
};

struct CoordinatorOptions {
  Index components = 1;  // K; 0 keeps only the raw series
  Index kappa = 25;
  Index patch_length = 24;
};

template <typename Scalar>
struct Coordinates {
  Decomposition<Scalar> decomposition;
  PatchGrid<Scalar> grid;
};

template <typename Derived>
Coordinates<typename Derived::Scalar> coordinate(const Eigen::MatrixBase<Derived>& lookback,
                                                 const CoordinatorOptions& options) {
  using Scalar = typename Derived::Scalar;
  Coordinates<Scalar> out;
  auto& d = out.decomposition;
  d.original = lookback;
  std::vector<Vector<Scalar>> rows{d.original};
  if (options.components > 0) {
    auto split = detrend(d.original, options.kappa);
    d.trend = std::move(split.trend);
    d.detrended = std::move(split.detrended);
    d.spectrum = spectrum(d.detrended);
    d.boundaries = select_boundaries(d.spectrum, options.components);
    d.components = decompose(d.spectrum, d.boundaries);
    rows.insert(rows.end(), d.components.begin(), d.components.end());
  }
  out.grid = patch(rows, options.patch_length);
  return out;
}

}  // namespace contextst
