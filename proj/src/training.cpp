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

#include "contextst/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

namespace contextst {
namespace {

// Runs fn(worker, begin, end) over contiguous chunks of [0, n).
template <typename Fn>
void parallel_chunks(Index n, Index threads, Fn&& fn) {
  const Index workers = std::max<Index>(1, std::min(threads, n));
  if (workers == 1) {
    fn(Index{0}, Index{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (Index w = 0; w < workers; ++w) {
    const Index begin = n * w / workers;
    const Index end = n * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(w, begin, end);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <typename Scalar>
Vector<Scalar> cast_vec(const Eigen::VectorXd& v) {
  return v.cast<Scalar>();
}

std::vector<Index> even_subsample(Index total, Index wanted) {
  std::vector<Index> idx;
  if (wanted <= 0 || wanted >= total) {
    idx.resize(static_cast<std::size_t>(total));
    std::iota(idx.begin(), idx.end(), Index{0});
    return idx;
  }
  for (Index i = 0; i < wanted; ++i) idx.push_back(i * total / wanted);
  return idx;
}

}  // namespace

double huber_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& truth, double delta) {
  if (prediction.size() != truth.size() || prediction.size() == 0) throw ShapeError("huber_loss: length mismatch");
  if (!(delta > 0.0)) throw ConfigError("huber delta must be positive");
  double total = 0.0;
  for (Index i = 0; i < prediction.size(); ++i) {
    const double e = std::abs(prediction(i) - truth(i));
    total += e <= delta ? 0.5 * e * e : delta * e - 0.5 * delta * delta;
  }
  return total / static_cast<double>(prediction.size());
}

double total_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& truth, const RoutingStats& stats,
                  double delta, double alpha) {
  return huber_loss(prediction, truth, delta) + alpha * load_balance_loss(stats, stats.F.size());
}

Domain prepare_domain(Dataset raw, const SplitSpec& spec, const ContextAnchors* anchors, Index context_dim) {
  Domain d;
  d.name = raw.name;
  d.split = split(raw, spec);
  d.normalizer = fit_normalizer(raw, d.split.train);
  d.normalized = apply_normalizer(raw, d.normalizer);
  if (anchors != nullptr) {
    if (anchors->dim != context_dim) {
      throw DataError("anchors for '" + anchors->dataset + "' have dim " + std::to_string(anchors->dim) +
                      ", model expects " + std::to_string(context_dim));
    }
    d.anchors = bind_anchors(*anchors, raw);
  } else {
    d.anchors = zero_anchors(context_dim, raw.num_variables());
  }
  d.raw = std::move(raw);
  return d;
}

WindowSet domain_windows(const Domain& domain, Segment segment, Index lookback, Index horizon, Index stride) {
  WindowOptions opts;
  opts.lookback = lookback;
  opts.horizon = horizon;
  opts.stride = stride;
  Range range = domain.split.train;
  if (segment == Segment::kVal) range = domain.split.val;
  if (segment == Segment::kTest) range = domain.split.test;
  opts.borrow_context = segment != Segment::kTrain;
  WindowSet set;
  set.name = domain.name;
  set.windows = make_windows(domain.normalized, range, opts, &domain.normalizer);
  set.anchors = domain.anchors;
  return set;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be finite and >= 0");
  if (!(huber_delta > 0.0)) throw ConfigError("train.delta must be positive");
  if (!(load_alpha >= 0.0)) throw ConfigError("train.alpha must be >= 0");
  if (epochs < 1 || batch_size < 1 || threads < 1 || patience < 1) {
    throw ConfigError("train.epochs, batch_size, threads and patience must be positive");
  }
}

template <typename Scalar>
BatchResult<Scalar> batch_objective(const ContextModel<Scalar>& model, const ModelParams<Scalar>& params,
                                    std::span<const SampleRef> batch, double delta, double alpha, Index threads,
                                    bool with_grad) {
  const Index n = static_cast<Index>(batch.size());
  if (n == 0) throw DataError("empty batch");
  const ModelConfig& cfg = model.config();
  const Index workers = std::max<Index>(1, std::min(threads, n));

  std::vector<Tape<Scalar>> tapes(static_cast<std::size_t>(n));
  std::vector<ForwardGraph<Scalar>> graphs(static_cast<std::size_t>(n));
  std::vector<ModelParams<Scalar>> worker_grads;
  if (with_grad) worker_grads.assign(static_cast<std::size_t>(workers), params.zeros_like());

  parallel_chunks(n, workers, [&](Index w, Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      const SampleRef& s = batch[static_cast<std::size_t>(i)];
      const auto& anchors = *s.anchors;
      const Vector<Scalar> global = cast_vec<Scalar>(anchors.global);
      const Vector<Scalar> variable = cast_vec<Scalar>(anchors.variables.at(static_cast<std::size_t>(s.window->variable_index)));
      graphs[static_cast<std::size_t>(i)] =
          model.build(tapes[static_cast<std::size_t>(i)], params,
                      with_grad ? &worker_grads[static_cast<std::size_t>(w)] : nullptr,
                      s.window->lookback.cast<Scalar>(), global, variable);
    }
  });

  RoutingAccumulator pooled(cfg.use_moe ? cfg.experts : 0, cfg.use_moe ? cfg.active : 1);
  for (const auto& g : graphs) pooled.merge(g.routing);
  BatchResult<Scalar> result;
  result.routing = pooled.stats();

  // d(alpha * M * sum_e F_e P_e) / d gate[t, e] = alpha * M * F_e / tokens.
  RowVector<Scalar> gate_coeff;
  const bool load_term = cfg.use_moe && alpha > 0.0 && pooled.tokens() > 0;
  if (load_term) {
    gate_coeff = (result.routing.F * (alpha * static_cast<double>(cfg.experts) / static_cast<double>(pooled.tokens())))
                     .transpose()
                     .template cast<Scalar>();
  }

  std::vector<double> pred_losses(static_cast<std::size_t>(n));
  parallel_chunks(n, workers, [&](Index, Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      auto& tape = tapes[static_cast<std::size_t>(i)];
      const auto& graph = graphs[static_cast<std::size_t>(i)];
      const Matrix<Scalar> target = batch[static_cast<std::size_t>(i)].window->target.transpose().template cast<Scalar>();
      tape.set_scope("loss");
      auto pred_loss = tape.huber_mean(graph.prediction, target, static_cast<Scalar>(delta));
      pred_losses[static_cast<std::size_t>(i)] = static_cast<double>(tape.scalar(pred_loss));
      if (!with_grad) continue;
      auto loss = tape.scale(pred_loss, Scalar(1) / static_cast<Scalar>(n));
      if (load_term) {
        for (const auto& gate_var : graph.gates) {
          const Index rows = tape.value(gate_var).rows();
          loss = tape.add(loss, tape.weighted_sum(gate_var, gate_coeff.replicate(rows, 1)));
        }
      }
      tape.backward(loss);
    }
  });

  double sum = 0.0;
  for (double v : pred_losses) sum += v;
  result.pred_loss = sum / static_cast<double>(n);
  result.loss = result.pred_loss + (cfg.use_moe ? alpha * result.routing.l_load : 0.0);
  if (with_grad) {
    result.grads = std::move(worker_grads.front());
    for (std::size_t w = 1; w < worker_grads.size(); ++w) result.grads += worker_grads[w];
  }
  return result;
}

template BatchResult<double> batch_objective(const ContextModel<double>&, const ModelParams<double>&,
                                             std::span<const SampleRef>, double, double, Index, bool);
template BatchResult<float> batch_objective(const ContextModel<float>&, const ModelParams<float>&,
                                            std::span<const SampleRef>, double, double, Index, bool);

std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_mse"] = r.val_mse;
  j["val_mae"] = r.val_mae;
  j["l_load"] = r.l_load;
  j["lr"] = r.lr;
  j["seconds"] = r.seconds;
  return j.dump();
}

template <typename Scalar>
Eigen::VectorXd ModelForecaster<Scalar>::predict(const SeriesWindow& window, const BoundAnchors& anchors,
                                                 RoutingAccumulator* routing) const {
  Tape<Scalar> tape;
  const Vector<Scalar> global = anchors.global.cast<Scalar>();
  const Vector<Scalar> variable = anchors.variables.at(static_cast<std::size_t>(window.variable_index)).cast<Scalar>();
  auto graph = model_.build(tape, params_, nullptr, window.lookback.cast<Scalar>(), global, variable);
  if (routing != nullptr) routing->merge(graph.routing);
  return tape.value(graph.prediction).row(0).transpose().template cast<double>();
}

template class ModelForecaster<double>;
template class ModelForecaster<float>;

const HorizonMetrics& ForecastReport::at(Index horizon) const {
  for (const auto& m : metrics) {
    if (m.horizon == horizon) return m;
  }
  throw ConfigError("report has no metrics for horizon " + std::to_string(horizon));
}

std::string ForecastReport::to_json() const {
  nlohmann::ordered_json j;
  j["windows"] = windows;
  j["space"] = raw_units ? "raw" : "normalized";
  auto arr = nlohmann::ordered_json::array();
  for (const auto& m : metrics) {
    nlohmann::ordered_json e;
    e["horizon"] = m.horizon;
    e["mse"] = m.mse;
    e["mae"] = m.mae;
    arr.push_back(e);
  }
  j["metrics"] = arr;
  if (has_routing) {
    nlohmann::ordered_json r;
    r["tokens"] = routing.tokens;
    r["F"] = std::vector<double>(routing.F.data(), routing.F.data() + routing.F.size());
    r["P"] = std::vector<double>(routing.P.data(), routing.P.data() + routing.P.size());
    r["l_load"] = routing.l_load;
    j["routing"] = r;
  }
  return j.dump(2) + "\n";
}

ForecastReport evaluate(std::span<const WindowSet> sets, const Forecaster& forecaster, const EvalOptions& options) {
  const Index T = forecaster.horizon();
  std::vector<Index> horizons = options.horizons.empty() ? std::vector<Index>{T} : options.horizons;
  for (Index h : horizons) {
    if (h < 1 || h > T) {
      throw ConfigError("requested horizon " + std::to_string(h) + " exceeds the forecaster horizon " +
                        std::to_string(T));
    }
  }
  std::vector<SampleRef> refs;
  for (const auto& set : sets) {
    for (const auto& w : set.windows) {
      if (w.target.size() != T) {
        throw ConfigError("window horizon " + std::to_string(w.target.size()) + " does not match forecaster horizon " +
                          std::to_string(T));
      }
      refs.push_back({&w, &set.anchors});
    }
  }
  const auto picked = even_subsample(static_cast<Index>(refs.size()), options.max_windows);
  const Index n = static_cast<Index>(picked.size());
  if (n == 0) throw DataError("evaluate: no windows");

  // Per-window cumulative squared/absolute errors along the horizon.
  std::vector<Eigen::VectorXd> sq(static_cast<std::size_t>(n)), ab(static_cast<std::size_t>(n));
  const Index workers = std::max<Index>(1, std::min(options.threads, n));
  std::vector<RoutingAccumulator> routing(static_cast<std::size_t>(n));
  parallel_chunks(n, workers, [&](Index, Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      const SampleRef& s = refs[static_cast<std::size_t>(picked[static_cast<std::size_t>(i)])];
      auto* acc = forecaster.routes() ? &routing[static_cast<std::size_t>(i)] : nullptr;
      Eigen::VectorXd pred = forecaster.predict(*s.window, *s.anchors, acc);
      Eigen::VectorXd truth = s.window->target;
      if (options.raw_units) {
        pred = pred.array() * s.window->std + s.window->mean;
        truth = truth.array() * s.window->std + s.window->mean;
      }
      const Eigen::ArrayXd err = pred - truth;
      sq[static_cast<std::size_t>(i)] = err.square().matrix();
      ab[static_cast<std::size_t>(i)] = err.abs().matrix();
    }
  });

  ForecastReport report;
  report.windows = n;
  report.raw_units = options.raw_units;
  for (Index h : horizons) {
    double se = 0.0, ae = 0.0;
    for (Index i = 0; i < n; ++i) {
      se += sq[static_cast<std::size_t>(i)].head(h).mean();
      ae += ab[static_cast<std::size_t>(i)].head(h).mean();
    }
    report.metrics.push_back({h, se / static_cast<double>(n), ae / static_cast<double>(n)});
  }
  if (forecaster.routes()) {
    RoutingAccumulator total;
    for (const auto& r : routing) total.merge(r);
    report.has_routing = true;
    report.routing = total.stats();
  }
  return report;
}

ForecastReport zero_shot(const Forecaster& source, const Domain& target, Index lookback, Index horizon,
                         const EvalOptions& options) {
  if (horizon != source.horizon()) {
    throw ConfigError("zero-shot horizon " + std::to_string(horizon) + " does not match the source model (" +
                      std::to_string(source.horizon()) + ")");
  }
  const WindowSet test = domain_windows(target, Segment::kTest, lookback, horizon);
  return evaluate(std::span<const WindowSet>(&test, 1), source, options);
}

namespace {

template <typename Scalar>
TrainResult train_impl(std::span<const WindowSet> train_sets, std::span<const WindowSet> val_sets,
                       const ModelConfig& model_config, const TrainConfig& tc, const ModelParams<double>* initial,
                       const std::function<void(const EpochRecord&)>& on_epoch) {
  tc.validate();
  const ContextModel<Scalar> model(model_config);
  ModelParams<Scalar> params =
      initial != nullptr ? initial->template cast<Scalar>() : model.initialize(tc.seed);
  if (params.size() != ModelParams<Scalar>::zeros(model_config).size()) {
    throw ShapeError("initial parameters do not match the model configuration");
  }

  std::vector<SampleRef> samples;
  for (const auto& set : train_sets) {
    for (const auto& w : set.windows) {
      if (w.lookback.size() != model_config.L || w.target.size() != model_config.T) {
        throw ConfigError("training window shape does not match the model (L, T)");
      }
      samples.push_back({&w, &set.anchors});
    }
  }
  if (samples.empty()) throw DataError("no training windows");

  Adam<Scalar> adam(params, tc.lr);
  std::mt19937_64 rng(tc.seed);
  TrainResult result;
  result.params = params.template cast<double>();
  double best = std::numeric_limits<double>::infinity();
  Index stale = 0;
  const Index batches_total = (static_cast<Index>(samples.size()) + tc.batch_size - 1) / tc.batch_size;
  const Index batches =
      tc.max_batches_per_epoch > 0 ? std::min(batches_total, tc.max_batches_per_epoch) : batches_total;

  EvalOptions val_opts;
  val_opts.threads = tc.threads;
  val_opts.max_windows = tc.max_val_windows;
  bool have_val = false;
  for (const auto& s : val_sets) have_val = have_val || !s.windows.empty();

  for (Index epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(samples.begin(), samples.end(), rng);
    double loss_sum = 0.0, load_sum = 0.0;
    Index done = 0;
    try {
      for (Index b = 0; b < batches; ++b) {
        const Index begin = b * tc.batch_size;
        const Index end = std::min<Index>(begin + tc.batch_size, static_cast<Index>(samples.size()));
        const std::span<const SampleRef> batch(samples.data() + begin, static_cast<std::size_t>(end - begin));
        auto br = batch_objective(model, params, batch, tc.huber_delta, tc.load_alpha, tc.threads, true);
        if (!std::isfinite(br.loss) || !br.grads.all_finite()) throw NumericError("non-finite training loss");
        adam.step(params, br.grads);
        if (!params.all_finite()) throw NumericError("non-finite parameters after update");
        loss_sum += br.loss;
        load_sum += br.routing.l_load;
        result.step_losses.push_back(br.loss);
        ++done;
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.message = std::string("diverged in epoch ") + std::to_string(epoch) + ": " + e.what();
      break;
    }
    result.steps = adam.steps();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(std::max<Index>(done, 1));
    rec.l_load = load_sum / static_cast<double>(std::max<Index>(done, 1));
    rec.lr = tc.lr;
    double criterion = rec.train_loss;
    if (have_val) {
      const ModelForecaster<Scalar> current(model_config, params);
      const auto report = evaluate(val_sets, current, val_opts);
      rec.val_mse = report.metrics.front().mse;
      rec.val_mae = report.metrics.front().mae;
      criterion = rec.val_mse;
    }
    if (tc.record_timing) {
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (!std::isfinite(criterion)) {
      result.diverged = true;
      result.message = "non-finite validation metric in epoch " + std::to_string(epoch);
      break;
    }
    if (criterion < best) {
      best = criterion;
      stale = 0;
      result.best_epoch = epoch;
      result.params = params.template cast<double>();
    } else if (++stale >= tc.patience) {
      break;
    }
  }
  return result;
}

}  // namespace

TrainResult train(std::span<const WindowSet> train_sets, std::span<const WindowSet> val_sets,
                  const ModelConfig& model_config, const TrainConfig& train_config, const ModelParams<double>* initial,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train_config.precision == Precision::kF32) {
    return train_impl<float>(train_sets, val_sets, model_config, train_config, initial, on_epoch);
  }
  return train_impl<double>(train_sets, val_sets, model_config, train_config, initial, on_epoch);
}

}  // namespace contextst
