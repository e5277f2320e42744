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

#include "contextst/model.hpp"

namespace contextst {

double load_balance_loss(const RoutingStats& stats, Index experts) {
  if (stats.F.size() != experts || stats.P.size() != experts) {
    throw ShapeError("load_balance_loss: stats do not cover " + std::to_string(experts) + " experts");
  }
  return static_cast<double>(experts) * stats.F.dot(stats.P);
}

RoutingStats RoutingAccumulator::stats() const {
  RoutingStats s;
  s.tokens = tokens_;
  const Index m = counts_.size();
  if (tokens_ == 0) {
    s.F = Eigen::VectorXd::Zero(m);
    s.P = Eigen::VectorXd::Zero(m);
    return s;
  }
  const double n = static_cast<double>(tokens_);
  s.F = counts_ / (static_cast<double>(active_) * n);
  s.P = gate_sums_ / n;
  s.l_load = load_balance_loss(s, m);
  return s;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (P < 1 || L < 1 || T < 1 || D < 1 || heads < 1 || blocks < 1 || context_dim < 1 || ff_mult < 1) {
    fail("P, L, T, D, heads, blocks, context_dim and ff_mult must be positive");
  }
  if (D % heads != 0) fail("D=" + std::to_string(D) + " is not divisible by heads=" + std::to_string(heads));
  if (K < 0) fail("K must be >= 0");
  if (use_moe && (experts < 1 || active < 1 || active > experts)) fail("need 1 <= r <= M");
  if (K > 0) {
    if (L % 2 != 0 || L < 4) fail("the spectral decomposition needs an even lookback >= 4");
    if (K > L / 2) fail("K must not exceed L/2");
    if (kappa < 0 || 2 * kappa + 1 > L) fail("moving-average window 2*kappa+1 exceeds L");
  }
  if (!(norm_eps > 0.0)) fail("norm_eps must be positive");
}

std::vector<ParamSpec> parameter_registry(const ModelConfig& c) {
  c.validate();
  std::vector<ParamSpec> r;
  auto mat = [&r](std::string name, Index rows, Index cols) { r.push_back({std::move(name), rows, cols, false}); };
  auto vec = [&r](std::string name, Index n) { r.push_back({std::move(name), 1, n, true}); };
  auto mlp_specs = [&](const std::string& prefix) {
    mat(prefix + ".fc1.weight", c.D, c.ff_width());
    vec(prefix + ".fc1.bias", c.ff_width());
    mat(prefix + ".fc2.weight", c.ff_width(), c.D);
    vec(prefix + ".fc2.bias", c.D);
  };
  mat("embed.weight", c.P, c.D);
  vec("embed.bias", c.D);
  mat("align.fc1.weight", c.context_dim, c.D);
  vec("align.fc1.bias", c.D);
  mat("align.fc2.weight", c.D, c.D);
  vec("align.fc2.bias", c.D);
  for (Index j = 0; j < c.blocks; ++j) {
    const std::string b = "blocks." + std::to_string(j);
    for (const char* p : {"query", "key", "value", "output"}) {
      mat(b + ".attn." + p + ".weight", c.D, c.D);
      vec(b + ".attn." + p + ".bias", c.D);
    }
    vec(b + ".norm1.gain", c.D);
    vec(b + ".norm1.bias", c.D);
    if (c.use_moe) {
      mat(b + ".gate.weight", c.D, c.experts);
      for (Index e = 0; e < c.experts; ++e) mlp_specs(b + ".experts." + std::to_string(e));
    }
    mlp_specs(b + ".shared");
    vec(b + ".norm2.gain", c.D);
    vec(b + ".norm2.bias", c.D);
  }
  mat("head.weight", c.tokens() * c.D, c.T);
  vec("head.bias", c.T);
  return r;
}

template <typename Scalar>
ContextModel<Scalar>::ContextModel(ModelConfig config) : config_(std::move(config)) {
  registry_ = parameter_registry(config_);
  const ModelParams<Scalar> names(registry_);
  auto idx = [&names](const std::string& n) { return *names.find(n); };
  auto mlp_idx = [&idx](const std::string& p) {
    return MlpIndex{idx(p + ".fc1.weight"), idx(p + ".fc1.bias"), idx(p + ".fc2.weight"), idx(p + ".fc2.bias")};
  };
  embed_w_ = idx("embed.weight");
  embed_b_ = idx("embed.bias");
  align_w1_ = idx("align.fc1.weight");
  align_b1_ = idx("align.fc1.bias");
  align_w2_ = idx("align.fc2.weight");
  align_b2_ = idx("align.fc2.bias");
  head_w_ = idx("head.weight");
  head_b_ = idx("head.bias");
  for (Index j = 0; j < config_.blocks; ++j) {
    const std::string b = "blocks." + std::to_string(j);
    BlockIndex bi;
    bi.wq = idx(b + ".attn.query.weight");
    bi.bq = idx(b + ".attn.query.bias");
    bi.wk = idx(b + ".attn.key.weight");
    bi.bk = idx(b + ".attn.key.bias");
    bi.wv = idx(b + ".attn.value.weight");
    bi.bv = idx(b + ".attn.value.bias");
    bi.wo = idx(b + ".attn.output.weight");
    bi.bo = idx(b + ".attn.output.bias");
    bi.norm1_gain = idx(b + ".norm1.gain");
    bi.norm1_bias = idx(b + ".norm1.bias");
    bi.norm2_gain = idx(b + ".norm2.gain");
    bi.norm2_bias = idx(b + ".norm2.bias");
    if (config_.use_moe) {
      bi.router = idx(b + ".gate.weight");
      for (Index e = 0; e < config_.experts; ++e) bi.experts.push_back(mlp_idx(b + ".experts." + std::to_string(e)));
    }
    bi.shared = mlp_idx(b + ".shared");
    blocks_.push_back(std::move(bi));
  }
}

template <typename Scalar>
typename ContextModel<Scalar>::Mat ContextModel<Scalar>::patches(const Vector<Scalar>& lookback) const {
  if (lookback.size() != config_.L) {
    throw ShapeError("lookback has length " + std::to_string(lookback.size()) + ", model expects " +
                     std::to_string(config_.L));
  }
  CoordinatorOptions opts;
  opts.components = config_.K;
  opts.kappa = config_.kappa;
  opts.patch_length = config_.P;
  return coordinate(lookback, opts).grid.patches;
}

template <typename Scalar>
ForwardGraph<Scalar> ContextModel<Scalar>::build(Tape<Scalar>& tape, const ModelParams<Scalar>& params,
                                                 ModelParams<Scalar>* grads, const Vector<Scalar>& lookback,
                                                 const Vector<Scalar>& global_anchor,
                                                 const Vector<Scalar>& variable_anchor, bool record_routes) const {
  return build_from_patches(tape, params, grads, patches(lookback), global_anchor, variable_anchor, record_routes);
}

template <typename Scalar>
ForwardGraph<Scalar> ContextModel<Scalar>::build_from_patches(Tape<Scalar>& tape, const ModelParams<Scalar>& params,
                                                              ModelParams<Scalar>* grads, Mat patches,
                                                              const Vector<Scalar>& global_anchor,
                                                              const Vector<Scalar>& variable_anchor,
                                                              bool record_routes) const {
  const ModelConfig& c = config_;
  if (params.size() != registry_.size()) throw ShapeError("parameter set does not match the model registry");
  if (patches.rows() != c.components() * c.patches() || patches.cols() != c.P) {
    throw ShapeError("patch grid shape does not match the model configuration");
  }
  if (c.use_context && (global_anchor.size() != c.context_dim || variable_anchor.size() != c.context_dim)) {
    throw ShapeError("anchor width does not match context_dim=" + std::to_string(c.context_dim));
  }
  auto param = [&](std::size_t i) { return tape.parameter(params[i], grads != nullptr ? &(*grads)[i] : nullptr); };
  auto mlp_vars = [&](const MlpIndex& m) { return MlpVars<Scalar>{param(m.w1), param(m.b1), param(m.w2), param(m.b2)}; };

  ForwardGraph<Scalar> graph;
  graph.routing = RoutingAccumulator(c.use_moe ? c.experts : 0, c.use_moe ? c.active : 1);
  const Scalar eps = static_cast<Scalar>(c.norm_eps);
  const Index groups = c.components();
  const Index group = c.tokens();

  tape.set_scope("embed");
  auto x = tape.constant(std::move(patches));
  auto embedded = tape.affine(x, param(embed_w_), param(embed_b_));

  tape.set_scope("align");
  const MlpVars<Scalar> align{param(align_w1_), param(align_b1_), param(align_w2_), param(align_b2_)};
  auto aligned = [&](const Vector<Scalar>& anchor) {
    auto row = tape.constant(c.use_context ? Mat(anchor.transpose()) : Mat::Zero(1, c.context_dim));
    return mlp(tape, row, align, c.activation);
  };
  auto h = tape.append_token(embedded, aligned(variable_anchor), groups);
  std::optional<typename Tape<Scalar>::Var> context;
  if (c.use_context) context = aligned(global_anchor);

  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const BlockIndex& b = blocks_[j];
    const std::string scope = "blocks." + std::to_string(j);
    tape.set_scope(scope + ".attn");
    AttentionVars<Scalar> attn{param(b.wq), param(b.bq), param(b.wk), param(b.bk),
                               param(b.wv), param(b.bv), param(b.wo), param(b.bo)};
    NormVars<Scalar> norm1{param(b.norm1_gain), param(b.norm1_bias)};
    auto mixed = attention_sublayer(tape, h, attn, norm1, group, c.heads, eps);

    tape.set_scope(scope + ".moe");
    NormVars<Scalar> norm2{param(b.norm2_gain), param(b.norm2_bias)};
    const auto shared = mlp_vars(b.shared);
    if (!c.use_moe) {
      h = moe_sublayer(tape, mixed, static_cast<const GateResult<Scalar>*>(nullptr), {}, shared, norm2,
                       c.activation, eps);
      continue;
    }
    std::vector<MlpVars<Scalar>> experts;
    experts.reserve(b.experts.size());
    for (const auto& e : b.experts) experts.push_back(mlp_vars(e));
    auto g = route(tape, mixed, context, param(b.router), c.active);
    const Mat& weights = tape.value(g.weights);
    for (Index i = 0; i < weights.rows(); ++i) {
      const auto row = weights.row(i).template cast<double>();
      graph.routing.add(g.choices[static_cast<std::size_t>(i)], row);
      if (record_routes) {
        TokenRoute route_rec;
        route_rec.block = static_cast<Index>(j);
        route_rec.component = i / group;
        route_rec.token = i % group;
        route_rec.experts = g.choices[static_cast<std::size_t>(i)];
        for (Index e : route_rec.experts) route_rec.weights.push_back(static_cast<double>(weights(i, e)));
        graph.routes.push_back(std::move(route_rec));
      }
    }
    graph.gates.push_back(g.weights);
    h = moe_sublayer(tape, mixed, &g, experts, shared, norm2, c.activation, eps);
  }

  tape.set_scope("head");
  auto pooled = tape.flatten(tape.group_mean(h, groups));
  graph.prediction = tape.affine(pooled, param(head_w_), param(head_b_));
  tape.set_scope("");
  return graph;
}

template <typename Scalar>
ForwardTrace<Scalar> ContextModel<Scalar>::forward(const ModelParams<Scalar>& params, const Vector<Scalar>& lookback,
                                                   const Vector<Scalar>& global_anchor,
                                                   const Vector<Scalar>& variable_anchor) const {
  return forward_patches(params, patches(lookback), global_anchor, variable_anchor);
}

template <typename Scalar>
ForwardTrace<Scalar> ContextModel<Scalar>::forward_patches(const ModelParams<Scalar>& params, const Mat& patches,
                                                           const Vector<Scalar>& global_anchor,
                                                           const Vector<Scalar>& variable_anchor) const {
  Tape<Scalar> tape;
  auto graph = build_from_patches(tape, params, nullptr, patches, global_anchor, variable_anchor, true);
  ForwardTrace<Scalar> trace;
  trace.prediction = tape.value(graph.prediction).row(0).transpose();
  trace.routes = std::move(graph.routes);
  trace.routing = graph.routing.stats();
  return trace;
}

template class ContextModel<double>;
template class ContextModel<float>;

}  // namespace contextst
