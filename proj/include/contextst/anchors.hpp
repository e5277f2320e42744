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

#include "contextst/activation.hpp"
#include "contextst/common.hpp"
#include "contextst/data.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace contextst {

inline constexpr const char* kAnchorSchema = "contextst-anchors/1";

// Frozen text-embedding anchors for one dataset: a global description vector
// and one vector per variable, all of length `dim`.
struct ContextAnchors {
  std::string dataset;
  Index dim = 0;
  Eigen::VectorXd global;
  std::map<std::string, Eigen::VectorXd> variables;
  std::string source;

  void validate() const;
};

ContextAnchors parse_anchors(const std::string& json_text);
ContextAnchors load_anchors(const std::filesystem::path& path);
// Canonical form: schema, dataset, dim, global, variables (sorted), source.
std::string serialize_anchors(const ContextAnchors& anchors);
void write_anchors(const ContextAnchors& anchors, const std::filesystem::path& path);

// Anchors resolved against a dataset's variable order.
struct BoundAnchors {
  Eigen::VectorXd global;
  std::vector<Eigen::VectorXd> variables;

  Index dim() const { return global.size(); }
};

// Throws DataError listing every dataset variable missing from the file.
BoundAnchors bind_anchors(const ContextAnchors& anchors, const Dataset& dataset);
BoundAnchors zero_anchors(Index dim, Index num_variables);

// Deterministic stand-in embedder: signed feature hashing of character
// trigrams, unit-normalized. Same text and dim give the same vector.
Eigen::VectorXd offline_embedding(std::string_view text, Index dim);

// Generic descriptions of a dataset and each of its variables.
struct AnchorTexts {
  std::string global;
  std::vector<std::pair<std::string, std::string>> variables;  // (name, text)
};

enum class Trend { kUp, kDown, kFlat };

struct VarStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double median = 0.0;
  Trend trend = Trend::kFlat;
};

// Order statistics, mean and the sign of the least-squares slope. Slopes
// below 1e-6 * std in magnitude count as flat. Throws DataError when empty.
VarStats variable_stats(const Eigen::VectorXd& series);

// "In the history statistics of this variable, the minimum value is ...,
// and the overall trend is up."
std::string stats_sentence(const VarStats& stats);

// Statistics are taken over `stats_rows`; an empty range means every row.
AnchorTexts anchor_texts(const Dataset& dataset, const std::string& domain, Range stats_rows = {});

// Anchors built from anchor_texts with offline_embedding.
ContextAnchors offline_anchors(const Dataset& dataset, const std::string& domain, Index dim,
                               Range stats_rows = {});

// Two affine layers with an activation in between, mapping the context
// width to the model width. Row-vector convention: out = act(c W1 + b1) W2 + b2.
template <typename Scalar>
struct AlignWeights {
  Matrix<Scalar> w1;
  RowVector<Scalar> b1;
  Matrix<Scalar> w2;
  RowVector<Scalar> b2;
};

template <typename Derived, typename Scalar = typename Derived::Scalar>
RowVector<Scalar> align(const Eigen::MatrixBase<Derived>& anchor, const AlignWeights<Scalar>& weights,
                        Activation act) {
  if (anchor.size() != weights.w1.rows() || weights.b1.size() != weights.w1.cols() ||
      weights.w2.rows() != weights.w1.cols() || weights.b2.size() != weights.w2.cols()) {
    throw ShapeError("align: anchor/weight shapes do not match");
  }
  const RowVector<Scalar> row = anchor.reshaped().transpose();
  RowVector<Scalar> hidden = row * weights.w1 + weights.b1;
  hidden = hidden.unaryExpr([act](Scalar x) { return activate(act, x); });
  return hidden * weights.w2 + weights.b2;
}

// Appends `anchor` as token N to each (K+1) block of N patch embeddings.
// Input is ((K+1)*N) x D, output ((K+1)*(N+1)) x D.
template <typename Scalar>
Matrix<Scalar> inject_variable_anchor(const Matrix<Scalar>& embeddings, Index components,
                                      const RowVector<Scalar>& anchor) {
  if (components < 1 || embeddings.rows() % components != 0 || anchor.size() != embeddings.cols()) {
    throw ShapeError("inject_variable_anchor: shape mismatch");
  }
  const Index per = embeddings.rows() / components;
  Matrix<Scalar> out(components * (per + 1), embeddings.cols());
  for (Index k = 0; k < components; ++k) {
    out.middleRows(k * (per + 1), per) = embeddings.middleRows(k * per, per);
    out.row(k * (per + 1) + per) = anchor;
  }
  return out;
}

}  // namespace contextst
