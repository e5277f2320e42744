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
#include "fixtures.hpp"

#include <doctest.h>

#include <set>

using namespace contextst;

TEST_SUITE("model") {

TEST_CASE("registry shapes follow the configuration") {
  ModelConfig c = fixture::tiny_config();
  const auto reg = parameter_registry(c);
  std::set<std::string> names;
  for (const auto& s : reg) names.insert(s.name);
  CHECK(names.size() == reg.size());
  const auto p = ModelParams<double>::zeros(c);
  CHECK(p.at("embed.weight").rows() == c.P);
  CHECK(p.at("embed.weight").cols() == c.D);
  CHECK(p.at("align.fc1.weight").rows() == c.context_dim);
  CHECK(p.at("blocks.0.gate.weight").rows() == c.D);
  CHECK(p.at("blocks.0.gate.weight").cols() == c.experts);
  CHECK(p.at("blocks.0.experts.1.fc1.weight").cols() == 4 * c.D);
  CHECK(p.at("head.weight").rows() == (c.patches() + 1) * c.D);
  CHECK(p.at("head.weight").cols() == c.T);
  CHECK(!p.find("blocks.1.attn.query.weight").has_value());

  c.use_moe = false;
  const auto dense = ModelParams<double>::zeros(c);
  CHECK(!dense.find("blocks.0.gate.weight").has_value());
  CHECK(!dense.find("blocks.0.experts.0.fc1.weight").has_value());
  CHECK(dense.find("blocks.0.shared.fc1.weight").has_value());
}

TEST_CASE("configuration validation") {
  ModelConfig c = fixture::tiny_config();
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.L = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.D = 9;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.active = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.K = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.kappa = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("initialization is seeded") {
  const auto c = fixture::tiny_config();
  const auto a = initialize_params<double>(c, 5);
  const auto b = initialize_params<double>(c, 5);
  const auto d = initialize_params<double>(c, 6);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i] == b[i];
    differs = differs || a[i] != d[i];
  }
  CHECK(same);
  CHECK(differs);
  CHECK(a.at("blocks.0.norm1.gain").isOnes());
  CHECK(a.at("head.bias").isZero());
  const double bound = std::sqrt(6.0 / (c.P + c.D));
  CHECK(a.at("embed.weight").cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("forward produces one horizon row and routes every token") {
  auto c = fixture::tiny_config();
  c.experts = 4;
  c.active = 2;
  const ContextModel<double> model(c);
  const auto params = fixture::jittered_params(c, 3);
  const auto batch = fixture::random_batch(c, 1, 4);
  const auto trace = model.forward(params, batch.windows[0].lookback, batch.anchors.global, batch.anchors.variables[0]);
  CHECK(trace.prediction.size() == c.T);
  CHECK(trace.prediction.allFinite());
  CHECK(trace.routing.tokens == c.blocks * c.components() * c.tokens());
  CHECK(trace.routes.size() == static_cast<std::size_t>(trace.routing.tokens));
  for (const auto& r : trace.routes) {
    CHECK(r.experts.size() == 2);
    CHECK(r.weights[0] >= r.weights[1]);
    CHECK(r.weights[0] + r.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(trace.routing.F.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(trace.routing.P.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lookback length is checked") {
  const auto c = fixture::tiny_config();
  const ContextModel<double> model(c);
  const auto params = model.initialize(1);
  const Eigen::VectorXd anchor = Eigen::VectorXd::Zero(c.context_dim);
  CHECK_THROWS(model.forward(params, Eigen::VectorXd::Zero(c.L + 2), anchor, anchor));
  CHECK_THROWS_AS(model.forward(params, Eigen::VectorXd::Zero(c.L), Eigen::VectorXd::Zero(3), anchor), ShapeError);
}

TEST_CASE("gate rows are sparse distributions") {
  std::mt19937_64 rng(12);
  const Eigen::MatrixXd h = oracle::random_matrix(rng, 10, 8);
  const Eigen::RowVectorXd ctx = oracle::random_matrix(rng, 1, 8);
  const Eigen::MatrixXd router = oracle::random_matrix(rng, 8, 4);
  for (Index r = 1; r <= 4; ++r) {
    const Eigen::MatrixXd g = gate(h, ctx, router, r);
    for (Index i = 0; i < g.rows(); ++i) {
      CHECK(std::abs(g.row(i).sum() - 1.0) < 1e-12);
      CHECK((g.row(i).array() > 0).count() == r);
    }
  }
  // Context enters multiplicatively: a unit context equals no context.
  CHECK(gate(h, Eigen::RowVectorXd::Ones(8).eval(), router, 2).isApprox(gate(h, Eigen::RowVectorXd(), router, 2)));
}

TEST_CASE("top-r ties go to the lower expert index") {
  Eigen::RowVectorXd z(4);
  z << 1.0, 2.0, 2.0, 2.0;
  CHECK(top_r(z, 2) == std::vector<Index>{1, 2});
  const Eigen::MatrixXd g = gate_from_logits(Eigen::MatrixXd(z), 2);
  CHECK(g(0, 1) == doctest::Approx(0.5));
  CHECK(g(0, 2) == doctest::Approx(0.5));
  CHECK(g(0, 3) == 0.0);
}

TEST_CASE("attention never mixes components") {
  auto c = fixture::tiny_config();
  std::mt19937_64 rng(2);
  AttentionWeights<double> w;
  w.wq = oracle::random_matrix(rng, 8, 8);
  w.wk = oracle::random_matrix(rng, 8, 8);
  w.wv = oracle::random_matrix(rng, 8, 8);
  w.wo = oracle::random_matrix(rng, 8, 8);
  w.bq = w.bk = w.bv = w.bo = Eigen::RowVectorXd::Zero(8);
  w.gain = Eigen::RowVectorXd::Ones(8);
  w.bias = Eigen::RowVectorXd::Zero(8);
  const Eigen::MatrixXd comp0 = oracle::random_matrix(rng, 3, 8);
  const Eigen::MatrixXd comp1 = oracle::random_matrix(rng, 3, 8);
  const Eigen::MatrixXd alone = component_attention(comp0, w, c.heads);
  Eigen::MatrixXd both(6, 8);
  both << comp0, comp1;
  // The model applies attention to each component block separately.
  Tape<double> tape;
  AttentionVars<double> a{tape.constant(w.wq), tape.constant(w.bq), tape.constant(w.wk), tape.constant(w.bk),
                          tape.constant(w.wv), tape.constant(w.bv), tape.constant(w.wo), tape.constant(w.bo)};
  NormVars<double> n{tape.constant(w.gain), tape.constant(w.bias)};
  const Eigen::MatrixXd grouped = tape.value(attention_sublayer(tape, tape.constant(both), a, n, 3, 2, 1e-5));
  CHECK((grouped.topRows(3) - alone).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("routed experts only touch their tokens") {
  std::mt19937_64 rng(31);
  const Index D = 4, M = 3;
  MoeWeights<double> w;
  w.router = oracle::random_matrix(rng, D, M);
  auto mlp_w = [&] {
    MlpWeights<double> m;
    m.w1 = oracle::random_matrix(rng, D, 2 * D);
    m.b1 = oracle::random_matrix(rng, 1, 2 * D);
    m.w2 = oracle::random_matrix(rng, 2 * D, D);
    m.b2 = oracle::random_matrix(rng, 1, D);
    return m;
  };
  for (Index e = 0; e < M; ++e) w.experts.push_back(mlp_w());
  w.shared = mlp_w();
  w.gain = Eigen::RowVectorXd::Ones(D);
  w.bias = Eigen::RowVectorXd::Zero(D);
  const Eigen::MatrixXd h = oracle::random_matrix(rng, 6, D);
  const auto out = moe_layer(h, Eigen::RowVectorXd(), w, 1, Activation::kGelu, 1e-5);
  // Dense reference: shared + sum_e g_e * expert_e over all rows.
  auto dense = [](const MlpWeights<double>& m, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd hidden = (x * m.w1).rowwise() + m.b1;
    hidden = hidden.unaryExpr([](double v) { return activate(Activation::kGelu, v); });
    return Eigen::MatrixXd((hidden * m.w2).rowwise() + m.b2);
  };
  Eigen::MatrixXd ref = dense(w.shared, h);
  for (Index e = 0; e < M; ++e) ref += (dense(w.experts[e], h).array().colwise() * out.gates.col(e).array()).matrix();
  CHECK((ref - out.mixed).cwiseAbs().maxCoeff() < 1e-12);
  Tape<double> t;
  const Eigen::MatrixXd normed = t.value(t.layer_norm(t.constant(Eigen::MatrixXd(ref + h)), t.constant(w.gain),
                                                      t.constant(w.bias), 1e-5));
  CHECK((normed - out.output).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient of the whole objective matches finite differences") {
  const auto report = fixture::check_model_gradient(fixture::tiny_config(), 42, 1e-5, 1e-4, 1e-2);
  INFO("worst " << report.worst << " in " << report.worst_name);
  CHECK(report.ok);
}

TEST_CASE("gradient with two active experts and two blocks") {
  auto c = fixture::tiny_config();
  c.K = 2;
  c.experts = 3;
  c.active = 2;
  c.blocks = 2;
  const auto report = fixture::check_model_gradient(c, 7, 1e-5, 1e-4, 1e-2);
  INFO("worst " << report.worst << " in " << report.worst_name);
  CHECK(report.ok);
}

TEST_CASE("ablations build and differ") {
  auto c = fixture::tiny_config();
  const auto batch = fixture::random_batch(c, 1, 9);
  const auto& w = batch.windows[0];
  for (int variant = 0; variant < 3; ++variant) {
    auto v = c;
    if (variant == 0) v.K = 0;
    if (variant == 1) v.use_context = false;
    if (variant == 2) v.use_moe = false;
    const ContextModel<double> model(v);
    const auto params = fixture::jittered_params(v, 1);
    const auto trace = model.forward(params, w.lookback, batch.anchors.global, batch.anchors.variables[0]);
    CHECK(trace.prediction.allFinite());
    if (variant == 2) CHECK(trace.routing.tokens == 0);
  }
  // Without context the anchors cannot influence the forecast.
  c.use_context = false;
  const ContextModel<double> model(c);
  const auto params = fixture::jittered_params(c, 1);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(c.context_dim);
  const auto a = model.forward(params, w.lookback, batch.anchors.global, batch.anchors.variables[0]);
  const auto b = model.forward(params, w.lookback, z, z);
  CHECK(a.prediction == b.prediction);
}

TEST_CASE("context changes the forecast") {
  const auto c = fixture::tiny_config();
  const auto batch = fixture::random_batch(c, 2, 9);
  const ContextModel<double> model(c);
  const auto params = fixture::jittered_params(c, 1);
  const auto& w = batch.windows[0];
  const auto a = model.forward(params, w.lookback, batch.anchors.global, batch.anchors.variables[0]);
  const auto b = model.forward(params, w.lookback, batch.anchors.global, batch.anchors.variables[1]);
  CHECK((a.prediction - b.prediction).norm() > 1e-6);
}

TEST_CASE("float model tracks the double model") {
  const auto c = fixture::tiny_config();
  const auto batch = fixture::random_batch(c, 1, 5);
  const auto pd = fixture::jittered_params(c, 2);
  const auto pf = pd.cast<float>();
  const ContextModel<double> md(c);
  const ContextModel<float> mf(c);
  const auto& w = batch.windows[0];
  const auto d = md.forward(pd, w.lookback, batch.anchors.global, batch.anchors.variables[0]);
  const auto f = mf.forward(pf, w.lookback.cast<float>(), batch.anchors.global.cast<float>(),
                            batch.anchors.variables[0].cast<float>());
  CHECK((f.prediction.cast<double>() - d.prediction).cwiseAbs().maxCoeff() < 1e-4);
}

}
