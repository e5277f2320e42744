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
// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// blocking criterion fails.

#include "contextst/analysis.hpp"
#include "contextst/anchors.hpp"
#include "contextst/checkpoint.hpp"
#include "contextst/config.hpp"
#include "contextst/coordinator.hpp"
#include "contextst/synthetic.hpp"
#include "contextst/training.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "process.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>

using namespace contextst;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum class State { kPass, kFail, kNotRun } state = State::kFail;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::State::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::State::kFail, std::move(d)}; }
Outcome check(bool ok, std::string d) { return ok ? pass(std::move(d)) : fail(std::move(d)); }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---- A1 -----------------------------------------------------------------
Outcome decomposition_exactness() {
  std::mt19937_64 rng(101);
  double worst_sum = 0.0, worst_trend = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::VectorXd x = oracle::random_vector(rng, 96, 1.0 + static_cast<double>(i % 7));
    CoordinatorOptions o;
    o.components = 1 + i % 4;
    o.kappa = 25;
    const auto c = coordinate(x, o);
    const auto& d = c.decomposition;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(96);
    for (const auto& comp : d.components) sum += comp;
    worst_sum = std::max(worst_sum, (sum - d.detrended).cwiseAbs().maxCoeff());
    worst_trend = std::max(worst_trend, (d.trend + d.detrended - x).cwiseAbs().maxCoeff());
  }
  return check(worst_sum <= 1e-9 && worst_trend <= 1e-9,
               "max band-sum error " + num(worst_sum) + ", max trend split error " + num(worst_trend));
}

// ---- A2 -----------------------------------------------------------------
Outcome parseval() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Index L = 4 + 2 * static_cast<Index>(rng() % 254);
    const Eigen::VectorXd x = oracle::random_vector(rng, L, 0.1 + static_cast<double>(rng() % 100));
    const auto s = spectrum(x);
    worst = std::max(worst, std::abs(s.psd.sum() - x.squaredNorm()) / x.squaredNorm());
  }
  return check(worst <= 1e-9, "max relative energy gap " + num(worst));
}

// ---- A3 -----------------------------------------------------------------
Outcome boundary_oracle() {
  std::mt19937_64 rng(303);
  int mismatches = 0, cases = 0;
  for (int i = 0; i < 100; ++i) {
    const Index L = 16 + 2 * static_cast<Index>(rng() % 60);
    Eigen::VectorXd x = oracle::random_vector(rng, L);
    if (i % 4 == 0) {
      for (Index t = 0; t < L; ++t) x(t) += 30.0 * std::sin(2.0 * std::numbers::pi * 2.0 * t / L);
    }
    const auto s = spectrum(x);
    for (Index K = 1; K <= 8; ++K) {
      ++cases;
      if (select_boundaries(s, K) != oracle::boundaries(s.psd, K)) ++mismatches;
    }
  }
  return check(mismatches == 0, std::to_string(cases - mismatches) + "/" + std::to_string(cases) + " exact matches");
}

// ---- A4 -----------------------------------------------------------------
Outcome gradient_check() {
  const auto r = fixture::check_model_gradient(fixture::tiny_config(), 404, 1e-5, 1e-4, 1e-2);
  return check(r.ok, std::to_string(r.entries) + " entries, worst " + num(r.worst) + "x tolerance in " + r.worst_name);
}

// ---- A5 -----------------------------------------------------------------
Outcome routing_identities() {
  auto c = fixture::tiny_config();
  c.experts = 4;
  c.active = 2;
  c.blocks = 2;
  const ContextModel<double> model(c);
  const auto params = fixture::jittered_params(c, 5);
  const auto batch = fixture::random_batch(c, 20, 6);
  double worst_gate = 0.0, worst_fp = 0.0;
  for (const auto& w : batch.windows) {
    const auto trace = model.forward(params, w.lookback, batch.anchors.global,
                                     batch.anchors.variables[static_cast<std::size_t>(w.variable_index)]);
    for (const auto& r : trace.routes) {
      double s = 0.0;
      for (double g : r.weights) s += g;
      worst_gate = std::max(worst_gate, std::abs(s - 1.0));
    }
    worst_fp = std::max({worst_fp, std::abs(trace.routing.F.sum() - 1.0), std::abs(trace.routing.P.sum() - 1.0)});
  }
  RoutingAccumulator uniform(4, 2), collapsed(4, 2);
  const Eigen::RowVectorXd front = (Eigen::RowVectorXd(4) << 0.5, 0.5, 0.0, 0.0).finished();
  const Eigen::RowVectorXd back = (Eigen::RowVectorXd(4) << 0.0, 0.0, 0.5, 0.5).finished();
  for (int i = 0; i < 64; ++i) {
    uniform.add({0, 1}, front);
    uniform.add({2, 3}, back);
    collapsed.add({0, 1}, front);
  }
  const double lu = uniform.stats().l_load, lc = collapsed.stats().l_load;
  const bool ok = worst_gate <= 1e-12 && worst_fp <= 1e-9 && std::abs(lu - 1.0) <= 1e-9 && std::abs(lc - 2.0) <= 1e-9;
  return check(ok, "gate sum err " + num(worst_gate) + ", F/P sum err " + num(worst_fp) + ", uniform L=" + num(lu) +
                       ", two-expert L=" + num(lc));
}

// ---- A6 / A8 / A10 shared task ------------------------------------------

ModelConfig transfer_config() {
  ModelConfig c;
  c.K = 2;
  c.P = 12;
  c.L = 48;
  c.T = 24;
  c.D = 32;
  c.heads = 2;
  c.blocks = 1;
  c.experts = 4;
  c.active = 2;
  c.context_dim = 32;
  c.kappa = 5;
  return c;
}

TrainConfig transfer_training(std::uint64_t seed) {
  TrainConfig t;
  t.lr = 2e-3;
  t.epochs = 8;
  t.batch_size = 32;
  t.seed = seed;
  t.patience = 3;
  t.record_timing = false;
  return t;
}

Dataset domain_a() {
  SineSpec s;
  s.name = "domain_a";
  s.periods = {24.0, 8.0};
  s.amplitudes = {1.0, 0.5};
  s.noise = 0.1;
  s.length = 1600;
  s.variables = 2;
  s.seed = 11;
  return make_sines(s);
}

Dataset domain_b() {
  SineSpec s;
  s.name = "domain_b";
  s.periods = {12.0, 6.0};
  s.amplitudes = {1.0, 0.5};
  s.noise = 0.1;
  s.length = 1600;
  s.variables = 2;
  s.seed = 22;
  return make_sines(s);
}

struct TransferScores {
  double in_domain = 0.0;
  double in_domain_base = 0.0;
  double zero_shot = 0.0;
  double zero_shot_base = 0.0;
};

TransferScores run_transfer(const ModelConfig& c, std::uint64_t seed) {
  const SplitSpec split = SplitSpec::ratios(0.7, 0.1, 0.2);
  const Dataset a = domain_a();
  const Dataset b = domain_b();
  const auto anchors_a = offline_anchors(a, "synthetic oscillation", c.context_dim, contextst::split(a, split).train);
  const auto anchors_b =
      offline_anchors(b, "fast synthetic oscillation", c.context_dim, contextst::split(b, split).train);
  const Domain src = prepare_domain(a, split, &anchors_a, c.context_dim);
  const Domain dst = prepare_domain(b, split, &anchors_b, c.context_dim);
  const auto train_set = domain_windows(src, Segment::kTrain, c.L, c.T);
  const auto val_set = domain_windows(src, Segment::kVal, c.L, c.T);
  const auto test_set = domain_windows(src, Segment::kTest, c.L, c.T);
  const auto result = train(std::span<const WindowSet>(&train_set, 1), std::span<const WindowSet>(&val_set, 1), c,
                            transfer_training(seed));
  const ModelForecaster<double> model(c, result.params);
  const PersistenceForecaster base(c.T);
  TransferScores s;
  s.in_domain = evaluate(std::span<const WindowSet>(&test_set, 1), model).at(c.T).mse;
  s.in_domain_base = evaluate(std::span<const WindowSet>(&test_set, 1), base).at(c.T).mse;
  s.zero_shot = zero_shot(model, dst, c.L, c.T).at(c.T).mse;
  s.zero_shot_base = zero_shot(base, dst, c.L, c.T).at(c.T).mse;
  return s;
}

Outcome synthetic_transfer() {
  const auto s = run_transfer(transfer_config(), 1);
  const bool zs_ok = s.zero_shot <= 0.8 * s.zero_shot_base;
  const bool in_ok = s.in_domain <= 0.5 * s.in_domain_base;
  return check(zs_ok && in_ok, "zero-shot mse " + num(s.zero_shot) + " vs repeat-last " + num(s.zero_shot_base) +
                                   " (ratio " + num(s.zero_shot / s.zero_shot_base) + "), in-domain " +
                                   num(s.in_domain) + " vs " + num(s.in_domain_base));
}

Outcome ablation_direction() {
  const char* names[] = {"full", "no-coordinator", "no-context", "dense-ffn"};
  double mean[4] = {0, 0, 0, 0};
  for (std::uint64_t seed : {1, 2, 3}) {
    for (int v = 0; v < 4; ++v) {
      ModelConfig c = transfer_config();
      if (v == 1) c.K = 0;
      if (v == 2) c.use_context = false;
      if (v == 3) c.use_moe = false;
      mean[v] += run_transfer(c, seed).zero_shot / 3.0;
    }
  }
  std::string detail;
  bool ok = true;
  for (int v = 0; v < 4; ++v) {
    detail += std::string(v ? ", " : "") + names[v] + " " + num(mean[v]);
    if (v > 0 && mean[0] > mean[v]) ok = false;
  }
  return check(ok, "mean zero-shot mse: " + detail);
}

Outcome determinism(const std::string& cli) {
  const fs::path root = fs::temp_directory_path() / "contextst_acceptance";
  fs::create_directories(root);
  const fs::path csv = root / "domain_a.csv";
  write_csv(domain_a(), csv);
  const auto c = transfer_config();
  std::string flags = " --set model.K=" + std::to_string(c.K) + " --set model.P=" + std::to_string(c.P) +
                      " --set model.L=" + std::to_string(c.L) + " --set model.T=" + std::to_string(c.T) +
                      " --set model.D=" + std::to_string(c.D) + " --set model.H=" + std::to_string(c.heads) +
                      " --set model.J=1 --set model.M=4 --set model.r=2 --set model.kappa=" + std::to_string(c.kappa) +
                      " --set model.context_dim=" + std::to_string(c.context_dim) +
                      " --set train.epochs=2 --set train.lr=0.002";
  const auto first = process::run(cli + " train --threads 1 --seed 7 --data " + csv.string() + flags + " --out " +
                                      (root / "run1").string(), root);
  const auto second = process::run(cli + " train --threads 1 --seed 7 --data " + csv.string() + flags + " --out " +
                                       (root / "run2").string(), root);
  if (first.code != 0 || second.code != 0) return fail("training command failed: " + first.err + second.err);
  const bool history = process::slurp(root / "run1" / "history.jsonl") == process::slurp(root / "run2" / "history.jsonl");
  const bool ckpt = process::slurp(root / "run1" / "model.ckpt") == process::slurp(root / "run2" / "model.ckpt");
  return check(history && ckpt && !process::slurp(root / "run1" / "history.jsonl").empty(),
               std::string("history ") + (history ? "identical" : "differs") + ", checkpoint " +
                   (ckpt ? "identical" : "differs"));
}

// ---- A7 -----------------------------------------------------------------
Outcome etth1_benchmark() {
  fs::path path = resolve_data_path("ETTh1.csv");
  if (!fs::exists(path)) path = resolve_data_path("data/ETTh1.csv");
  if (!fs::exists(path)) {
    return {Outcome::State::kNotRun, "ETTh1.csv not found (set CONTEXTST_DATA_DIR); stretch criterion not run"};
  }
  const ModelConfig c = preset_model("etth1");
  const Dataset raw = load_csv(path);
  const SplitSpec spec = *SplitSpec::preset("etth1");
  const auto anchors = offline_anchors(raw, "electricity", c.context_dim, split(raw, spec).train);
  const Domain d = prepare_domain(raw, spec, &anchors, c.context_dim);
  const auto train_set = domain_windows(d, Segment::kTrain, c.L, c.T, 4);
  const auto val_set = domain_windows(d, Segment::kVal, c.L, c.T);
  const auto test_set = domain_windows(d, Segment::kTest, c.L, c.T);
  TrainConfig t;
  t.lr = 1e-3;
  t.epochs = 3;
  t.batch_size = 32;
  t.max_val_windows = 1000;
  t.seed = 1;
  const auto result = train(std::span<const WindowSet>(&train_set, 1), std::span<const WindowSet>(&val_set, 1), c, t);
  const ModelForecaster<double> model(c, result.params);
  const double mse = evaluate(std::span<const WindowSet>(&test_set, 1), model).at(c.T).mse;
  const double base = evaluate(std::span<const WindowSet>(&test_set, 1), PersistenceForecaster(c.T)).at(c.T).mse;
  return check(mse <= 0.50 && mse < base, "test mse " + num(mse) + " (repeat-last " + num(base) + ")");
}

// ---- A9 -----------------------------------------------------------------
Outcome gaf_and_forecastability() {
  std::mt19937_64 rng(909);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd x = oracle::random_vector(rng, 2 + static_cast<Index>(rng() % 64));
    worst = std::max(worst, (gaf(x) - gaf_trig(x)).cwiseAbs().maxCoeff());
  }
  const Index L = 96;
  Eigen::VectorXd sine(L), flat = Eigen::VectorXd::Zero(L);
  for (Index t = 0; t < L; ++t) {
    sine(t) = std::sin(2.0 * std::numbers::pi * 7.0 * t / L);
    for (Index p = 1; p < L / 2; ++p) flat(t) += std::cos(2.0 * std::numbers::pi * p * t / L + 0.7 * p);
    flat(t) += (t % 2 == 0 ? 1.0 : -1.0) / std::sqrt(2.0);
  }
  const double fs = forecastability(sine), ff = forecastability(flat);
  return check(worst <= 1e-12 && std::abs(fs - 1.0) <= 1e-9 && std::abs(ff) <= 1e-9,
               "gaf form gap " + num(worst) + ", sine " + num(fs) + ", flat " + num(ff));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : CONTEXTST_CLI;
  struct Criterion {
    const char* id;
    const char* title;
    double budget_seconds;
    bool blocking;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"A1", "decomposition exactness", 5, true, decomposition_exactness},
      {"A2", "Parseval under the PSD convention", 5, true, parseval},
      {"A3", "boundary oracle equivalence", 1, true, boundary_oracle},
      {"A4", "gradient correctness", 60, true, gradient_check},
      {"A5", "routing and load-loss identities", 5, true, routing_identities},
      {"A6", "synthetic zero-shot transfer", 300, true, synthetic_transfer},
      {"A7", "desk-scale ETTh1 (stretch)", 3600, false, etth1_benchmark},
      {"A8", "ablation direction", 900, true, ablation_direction},
      {"A9", "GAF and forecastability", 5, true, gaf_and_forecastability},
      {"A10", "determinism", 300, true, [&cli] { return determinism(cli); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.state == Outcome::State::kPass && seconds > c.budget_seconds) {
      o = fail(o.detail + "; over the " + num(c.budget_seconds) + " s budget");
    }
    const char* status = o.state == Outcome::State::kPass ? "PASS" : (o.state == Outcome::State::kFail ? "FAIL" : "NOT RUN");
    std::printf("%-4s %-7s %s: %s [%.2f s]%s\n", c.id, status, c.title, o.detail.c_str(), seconds,
                c.blocking ? "" : " (non-blocking)");
    std::fflush(stdout);
    if (o.state == Outcome::State::kFail && c.blocking) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
