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

// Context-aware patch transformer.
//
// A lookback window is decomposed into K band-limited components plus the raw
// series, patched and embedded. The aligned variable anchor is appended as an
// extra token to every component. Each block applies self-attention within a
// component followed by a mixture-of-experts feed-forward layer whose router
// is conditioned on the aligned global anchor. Component outputs are averaged,
// flattened and projected to the horizon.

#include "contextst/activation.hpp"
#include "contextst/anchors.hpp"
#include "contextst/autodiff.hpp"
#include "contextst/coordinator.hpp"
#include "contextst/routing.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace contextst {

struct ModelConfig {
  Index K = 1;             // decomposed components (0 disables the coordinator)
  Index P = 24;            // patch length
  Index L = 96;            // lookback
  Index T = 96;            // horizon
  Index D = 256;           // model width
  Index heads = 2;
  Index blocks = 1;        // J
  Index experts = 4;       // M routed experts
  Index active = 2;        // r
  Index context_dim = 384; // D_C
  Index kappa = 25;        // moving-average half-width
  Index ff_mult = 4;       // expert hidden width = ff_mult * D
  Activation activation = Activation::kGelu;
  double norm_eps = 1e-5;
  bool use_context = true;  // false: zero anchors and context-free routing
  bool use_moe = true;      // false: one dense feed-forward layer per block

  Index patches() const { return (L + P - 1) / P; }
  Index tokens() const { return patches() + 1; }
  Index components() const { return K + 1; }
  Index ff_width() const { return ff_mult * D; }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ParamSpec {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  bool vector = false;  // stored with rank 1
};

// Closed, ordered list of every trainable array for a configuration.
std::vector<ParamSpec> parameter_registry(const ModelConfig& config);

template <typename Scalar>
class ModelParams {
 public:
  using Mat = Matrix<Scalar>;

  ModelParams() = default;
  explicit ModelParams(std::vector<ParamSpec> specs) : specs_(std::move(specs)) {
    values_.reserve(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      values_.push_back(Mat::Zero(specs_[i].rows, specs_[i].cols));
      index_.emplace(specs_[i].name, i);
    }
  }

  static ModelParams zeros(const ModelConfig& config) { return ModelParams(parameter_registry(config)); }
  ModelParams zeros_like() const { return ModelParams(specs_); }

  std::size_t size() const { return values_.size(); }
  const std::vector<ParamSpec>& specs() const { return specs_; }
  const ParamSpec& spec(std::size_t i) const { return specs_[i]; }

  Mat& operator[](std::size_t i) { return values_[i]; }
  const Mat& operator[](std::size_t i) const { return values_[i]; }

  std::optional<std::size_t> find(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  Mat& at(const std::string& name) { return values_[require(name)]; }
  const Mat& at(const std::string& name) const { return values_[require(name)]; }

  void set_zero() {
    for (auto& v : values_) v.setZero();
  }

  bool all_finite() const {
    for (const auto& v : values_) {
      if (!v.allFinite()) return false;
    }
    return true;
  }

  Index count() const {
    Index n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out(specs_);
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = values_[i].template cast<Other>();
    return out;
  }

  ModelParams& operator+=(const ModelParams& other) {
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }

 private:
  std::size_t require(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<ParamSpec> specs_;
  std::vector<Mat> values_;
  std::map<std::string, std::size_t> index_;
};

// Uniform(±sqrt(6/(fan_in+fan_out))) weights, zero biases, unit norm gains and
// N(0, 0.02) router weights.
template <typename Scalar>
ModelParams<Scalar> initialize_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<Scalar> params = ModelParams<Scalar>::zeros(config);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamSpec& s = params.spec(i);
    auto& m = params[i];
    const bool is_gain = s.name.ends_with(".gain");
    const bool is_router = s.name.ends_with("gate.weight");
    if (is_gain) {
      m.setOnes();
    } else if (is_router) {
      std::normal_distribution<double> dist(0.0, 0.02);
      for (Index j = 0; j < m.size(); ++j) m(j) = static_cast<Scalar>(dist(rng));
    } else if (!s.vector) {
      const double bound = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Index j = 0; j < m.size(); ++j) m(j) = static_cast<Scalar>(dist(rng));
    }
  }
  return params;
}

// ---------------------------------------------------------------------------
// Layer builders on a tape. Every function is shape-checked by the tape ops.

template <typename Scalar>
struct AttentionVars {
  using Var = typename Tape<Scalar>::Var;
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename Scalar>
struct MlpVars {
  using Var = typename Tape<Scalar>::Var;
  Var w1, b1, w2, b2;
};

template <typename Scalar>
struct NormVars {
  using Var = typename Tape<Scalar>::Var;
  Var gain, bias;
};

template <typename Scalar>
typename Tape<Scalar>::Var mlp(Tape<Scalar>& tape, typename Tape<Scalar>::Var x, const MlpVars<Scalar>& w,
                               Activation act) {
  auto hidden = tape.activation(tape.affine(x, w.w1, w.b1), act);
  return tape.affine(hidden, w.w2, w.b2);
}

// LayerNorm(H + MHSA(H)) with attention confined to blocks of `group` rows.
template <typename Scalar>
typename Tape<Scalar>::Var attention_sublayer(Tape<Scalar>& tape, typename Tape<Scalar>::Var h,
                                              const AttentionVars<Scalar>& w, const NormVars<Scalar>& norm,
                                              Index group, Index heads, Scalar eps,
                                              std::vector<Matrix<Scalar>>* probabilities = nullptr) {
  auto q = tape.affine(h, w.wq, w.bq);
  auto k = tape.affine(h, w.wk, w.bk);
  auto v = tape.affine(h, w.wv, w.bv);
  auto ctx = tape.grouped_attention(q, k, v, group, heads, probabilities);
  auto out = tape.affine(ctx, w.wo, w.bo);
  return tape.layer_norm(tape.add(h, out), norm.gain, norm.bias, eps);
}

template <typename Scalar>
struct GateResult {
  typename Tape<Scalar>::Var weights;  // tokens x M, at most r nonzero per row
  typename Tape<Scalar>::Var logits;
  typename Tape<Scalar>::BoolMat selected;
  std::vector<std::vector<Index>> choices;  // per token, in descending score
};

// Router: logits = (H ⊙ context) Wg, or H Wg when no context row is given;
// softmax over each token's top-r logits.
template <typename Scalar>
GateResult<Scalar> route(Tape<Scalar>& tape, typename Tape<Scalar>::Var h,
                         std::optional<typename Tape<Scalar>::Var> context, typename Tape<Scalar>::Var router,
                         Index r) {
  GateResult<Scalar> g;
  auto scored = context ? tape.mul_row(h, *context) : h;
  g.logits = tape.matmul(scored, router);
  const auto& z = tape.value(g.logits);
  if (r < 1 || r > z.cols()) throw ConfigError("active experts r must lie in [1, M]");
  g.selected = Tape<Scalar>::BoolMat::Constant(z.rows(), z.cols(), false);
  g.choices.reserve(static_cast<std::size_t>(z.rows()));
  for (Index i = 0; i < z.rows(); ++i) {
    auto pick = top_r(z.row(i), r);
    for (Index e : pick) g.selected(i, e) = true;
    g.choices.push_back(std::move(pick));
  }
  g.weights = tape.masked_softmax(g.logits, g.selected);
  return g;
}

// O = shared(H) + sum_e gate[:, e] * expert_e(H) over selected tokens only,
// then LayerNorm(O + H).
template <typename Scalar>
typename Tape<Scalar>::Var moe_sublayer(Tape<Scalar>& tape, typename Tape<Scalar>::Var h,
                                        const GateResult<Scalar>* gate, const std::vector<MlpVars<Scalar>>& experts,
                                        const MlpVars<Scalar>& shared, const NormVars<Scalar>& norm,
                                        Activation act, Scalar eps) {
  auto out = mlp(tape, h, shared, act);
  if (gate != nullptr) {
    const Index rows = tape.value(h).rows();
    for (std::size_t e = 0; e < experts.size(); ++e) {
      std::vector<Index> picked;
      for (Index i = 0; i < rows; ++i) {
        if (gate->selected(i, static_cast<Index>(e))) picked.push_back(i);
      }
      if (picked.empty()) continue;
      auto x = tape.gather_rows(h, picked);
      auto y = mlp(tape, x, experts[e], act);
      auto w = tape.gather_rows(tape.column(gate->weights, static_cast<Index>(e)), picked);
      out = tape.add(out, tape.scatter_rows(tape.mul_rows(y, w), picked, rows));
    }
  }
  return tape.layer_norm(tape.add(out, h), norm.gain, norm.bias, eps);
}

// ---------------------------------------------------------------------------

struct TokenRoute {
  Index block = 0;
  Index component = 0;
  Index token = 0;
  std::vector<Index> experts;
  std::vector<double> weights;  // gate weight of each selected expert
};

template <typename Scalar>
struct ForwardGraph {
  using Var = typename Tape<Scalar>::Var;
  Var prediction;            // 1 x T
  std::vector<Var> gates;    // per block; rows are routed tokens
  RoutingAccumulator routing;
  std::vector<TokenRoute> routes;  // filled when requested
};

template <typename Scalar>
struct ForwardTrace {
  Vector<Scalar> prediction;
  std::vector<TokenRoute> routes;
  RoutingStats routing;
};

template <typename Scalar>
class ContextModel {
 public:
  using Var = typename Tape<Scalar>::Var;
  using Mat = Matrix<Scalar>;

  explicit ContextModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ModelParams<Scalar> initialize(std::uint64_t seed) const { return initialize_params<Scalar>(config_, seed); }

  // Records the full forward computation on `tape`. Parameter adjoints go to
  // `grads` when it is non-null. Anchors are ignored when use_context is off.
  ForwardGraph<Scalar> build(Tape<Scalar>& tape, const ModelParams<Scalar>& params, ModelParams<Scalar>* grads,
                             const Vector<Scalar>& lookback, const Vector<Scalar>& global_anchor,
                             const Vector<Scalar>& variable_anchor, bool record_routes = false) const;

  ForwardTrace<Scalar> forward(const ModelParams<Scalar>& params, const Vector<Scalar>& lookback,
                               const Vector<Scalar>& global_anchor, const Vector<Scalar>& variable_anchor) const;

  // Same as forward() but with precomputed patches ((K+1)*N x P).
  ForwardTrace<Scalar> forward_patches(const ModelParams<Scalar>& params, const Mat& patches,
                                       const Vector<Scalar>& global_anchor,
                                       const Vector<Scalar>& variable_anchor) const;

  Mat patches(const Vector<Scalar>& lookback) const;

 private:
  struct MlpIndex {
    std::size_t w1, b1, w2, b2;
  };
  struct BlockIndex {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t norm1_gain, norm1_bias, norm2_gain, norm2_bias;
    std::size_t router = 0;
    std::vector<MlpIndex> experts;
    MlpIndex shared;
  };

  ForwardGraph<Scalar> build_from_patches(Tape<Scalar>& tape, const ModelParams<Scalar>& params,
                                          ModelParams<Scalar>* grads, Mat patches,
                                          const Vector<Scalar>& global_anchor,
                                          const Vector<Scalar>& variable_anchor, bool record_routes) const;

  ModelConfig config_;
  std::vector<ParamSpec> registry_;
  std::size_t embed_w_ = 0, embed_b_ = 0;
  std::size_t align_w1_ = 0, align_b1_ = 0, align_w2_ = 0, align_b2_ = 0;
  std::size_t head_w_ = 0, head_b_ = 0;
  std::vector<BlockIndex> blocks_;
};

extern template class ContextModel<double>;
extern template class ContextModel<float>;

// ---------------------------------------------------------------------------
// Standalone evaluations of individual stages on plain matrices. They build a
// private tape, so they share the exact code path of the full model.

template <typename Scalar>
Matrix<Scalar> embed_patches(const PatchGrid<Scalar>& grid, const Matrix<Scalar>& weight,
                             const RowVector<Scalar>& bias) {
  Tape<Scalar> tape;
  auto x = tape.constant(grid.patches);
  return tape.value(tape.affine(x, tape.constant(weight), tape.constant(bias)));
}

template <typename Scalar>
struct AttentionWeights {
  Matrix<Scalar> wq, wk, wv, wo;
  RowVector<Scalar> bq, bk, bv, bo;
  RowVector<Scalar> gain, bias;
};

// LayerNorm(H + MHSA(H)) for one component's tokens (rows of `h`).
template <typename Scalar>
Matrix<Scalar> component_attention(const Matrix<Scalar>& h, const AttentionWeights<Scalar>& w, Index heads,
                                   Scalar eps = Scalar(1e-5),
                                   std::vector<Matrix<Scalar>>* probabilities = nullptr) {
  Tape<Scalar> tape;
  AttentionVars<Scalar> a{tape.constant(w.wq), tape.constant(w.bq), tape.constant(w.wk), tape.constant(w.bk),
                          tape.constant(w.wv), tape.constant(w.bv), tape.constant(w.wo), tape.constant(w.bo)};
  NormVars<Scalar> n{tape.constant(w.gain), tape.constant(w.bias)};
  auto out = attention_sublayer(tape, tape.constant(h), a, n, h.rows(), heads, eps, probabilities);
  return tape.value(out);
}

// Gate weights (tokens x M) for token rows `h`; `context` is the aligned
// global anchor, or empty for context-free routing.
template <typename Scalar>
Matrix<Scalar> gate(const Matrix<Scalar>& h, const RowVector<Scalar>& context, const Matrix<Scalar>& router,
                    Index r) {
  Tape<Scalar> tape;
  std::optional<typename Tape<Scalar>::Var> c;
  if (context.size() > 0) c = tape.constant(context);
  auto g = route(tape, tape.constant(h), c, tape.constant(router), r);
  return tape.value(g.weights);
}

// Softmax over the top-r entries of each row of precomputed logits.
template <typename Scalar>
Matrix<Scalar> gate_from_logits(const Matrix<Scalar>& logits, Index r) {
  Tape<Scalar> tape;
  const Index m = logits.cols();
  auto identity = tape.constant(Matrix<Scalar>::Identity(m, m));
  auto g = route(tape, tape.constant(logits), std::nullopt, identity, r);
  return tape.value(g.weights);
}

template <typename Scalar>
struct MlpWeights {
  Matrix<Scalar> w1;
  RowVector<Scalar> b1;
  Matrix<Scalar> w2;
  RowVector<Scalar> b2;
};

template <typename Scalar>
struct MoeWeights {
  Matrix<Scalar> router;  // D x M
  std::vector<MlpWeights<Scalar>> experts;
  MlpWeights<Scalar> shared;
  RowVector<Scalar> gain, bias;
};

template <typename Scalar>
struct MoeOutput {
  Matrix<Scalar> mixed;   // O before the residual
  Matrix<Scalar> output;  // LayerNorm(O + H)
  Matrix<Scalar> gates;
};

template <typename Scalar>
MoeOutput<Scalar> moe_layer(const Matrix<Scalar>& h, const RowVector<Scalar>& context, const MoeWeights<Scalar>& w,
                            Index r, Activation act, Scalar eps = Scalar(1e-5)) {
  Tape<Scalar> tape;
  auto to_vars = [&tape](const MlpWeights<Scalar>& m) {
    return MlpVars<Scalar>{tape.constant(m.w1), tape.constant(m.b1), tape.constant(m.w2), tape.constant(m.b2)};
  };
  std::vector<MlpVars<Scalar>> experts;
  for (const auto& e : w.experts) experts.push_back(to_vars(e));
  const auto shared = to_vars(w.shared);
  NormVars<Scalar> norm{tape.constant(w.gain), tape.constant(w.bias)};
  auto hv = tape.constant(h);
  std::optional<typename Tape<Scalar>::Var> c;
  if (context.size() > 0) c = tape.constant(context);
  auto g = route(tape, hv, c, tape.constant(w.router), r);
  auto out = moe_sublayer(tape, hv, &g, experts, shared, norm, act, eps);
  MoeOutput<Scalar> result;
  result.output = tape.value(out);
  result.gates = tape.value(g.weights);
  // O itself, before the residual and norm, from dense expert evaluations.
  Matrix<Scalar> mixed = tape.value(mlp(tape, hv, shared, act));
  for (std::size_t e = 0; e < experts.size(); ++e) {
    const auto y = tape.value(mlp(tape, hv, experts[e], act));
    mixed += (y.array().colwise() * result.gates.col(static_cast<Index>(e)).array()).matrix();
  }
  result.mixed = std::move(mixed);
  return result;
}

}  // namespace contextst
