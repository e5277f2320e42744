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

#include "contextst/model.hpp"
#include "contextst/training.hpp"
#include "oracles.hpp"

#include <string>
#include <vector>

namespace fixture {

using namespace contextst;

// K=1, N=2, D=8, H=2, J=1, M=2, r=1.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.K = 1;
  c.P = 4;
  c.L = 8;
  c.T = 4;
  c.D = 8;
  c.heads = 2;
  c.blocks = 1;
  c.experts = 2;
  c.active = 1;
  c.context_dim = 6;
  c.kappa = 1;
  return c;
}

// Random windows with random anchors; the anchors outlive the windows.
struct Batch {
  std::vector<SeriesWindow> windows;
  BoundAnchors anchors;
  std::vector<SampleRef> refs;
};

inline Batch random_batch(const ModelConfig& c, Index size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Batch b;
  b.anchors.global = oracle::random_vector(rng, c.context_dim);
  for (Index v = 0; v < size; ++v) b.anchors.variables.push_back(oracle::random_vector(rng, c.context_dim));
  for (Index i = 0; i < size; ++i) {
    SeriesWindow w;
    w.lookback = oracle::random_vector(rng, c.L);
    w.target = oracle::random_vector(rng, c.T);
    w.variable_index = i;
    b.windows.push_back(w);
  }
  for (const auto& w : b.windows) b.refs.push_back({&w, &b.anchors});
  return b;
}

// Initialized parameters with every entry jittered so biases and gains are
// exercised away from their initial constants.
inline ModelParams<double> jittered_params(const ModelConfig& c, std::uint64_t seed, double scale = 0.1) {
  ModelParams<double> p = initialize_params<double>(c, seed);
  std::mt19937_64 rng(seed + 1);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += oracle::random_matrix(rng, p[i].rows(), p[i].cols(), scale);
  return p;
}

struct GradientReport {
  bool ok = true;
  Index entries = 0;
  double worst = 0.0;  // in units of the applicable tolerance
  std::string worst_name;
};

// Compares batch_objective gradients with central differences for every
// parameter entry.
inline GradientReport check_model_gradient(const ModelConfig& c, std::uint64_t seed, double h, double tol,
                                           double small_tol, double alpha = 0.01) {
  const ContextModel<double> model(c);
  ModelParams<double> params = jittered_params(c, seed);
  const Batch batch = random_batch(c, 2, seed + 7);
  const auto analytic = batch_objective(model, params, std::span<const SampleRef>(batch.refs), 1.0, alpha, 1, true);
  GradientReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Eigen::MatrixXd numeric = oracle::numeric_gradient(params[i], [&] {
      return batch_objective(model, params, std::span<const SampleRef>(batch.refs), 1.0, alpha, 1, false).loss;
    }, h);
    oracle::GradientMismatch m;
    if (!oracle::gradients_match(analytic.grads[i], numeric, tol, small_tol, &m)) report.ok = false;
    report.entries += numeric.size();
    if (m.worst > report.worst) {
      report.worst = m.worst;
      report.worst_name = params.specs()[i].name;
    }
  }
  return report;
}

}  // namespace fixture
