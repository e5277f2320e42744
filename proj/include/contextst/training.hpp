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

#include "contextst/anchors.hpp"
#include "contextst/data.hpp"
#include "contextst/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace contextst {

// ---- losses ---------------------------------------------------------------

// Mean over the horizon of 0.5 e^2 for |e| <= delta, else delta |e| - 0.5 delta^2.
double huber_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& truth, double delta);

// huber_loss + alpha * load_balance_loss.
double total_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& truth, const RoutingStats& stats,
                  double delta, double alpha);

// ---- data plumbing --------------------------------------------------------

// Windows of one domain together with the anchors their variable indices
// refer to.
struct WindowSet {
  std::string name;
  std::vector<SeriesWindow> windows;
  BoundAnchors anchors;
};

// A dataset normalized with its own train statistics, split, and bound to
// anchors (zeros of `context_dim` when no anchors are given).
struct Domain {
  std::string name;
  Dataset raw;
  Dataset normalized;
  Normalizer normalizer;
  Split split;
  BoundAnchors anchors;
};

Domain prepare_domain(Dataset raw, const SplitSpec& spec, const ContextAnchors* anchors, Index context_dim);

enum class Segment { kTrain, kVal, kTest };

// Train windows start inside the segment; val/test borrow lookback context
// from the preceding segment.
WindowSet domain_windows(const Domain& domain, Segment segment, Index lookback, Index horizon, Index stride = 1);

struct SampleRef {
  const SeriesWindow* window = nullptr;
  const BoundAnchors* anchors = nullptr;
};

// ---- optimisation ---------------------------------------------------------

enum class Precision { kF64, kF32 };

struct TrainConfig {
  double lr = 1e-3;
  Index epochs = 10;
  Index batch_size = 32;
  double huber_delta = 1.0;
  double load_alpha = 0.01;
  std::uint64_t seed = 1;
  Index patience = 3;
  Precision precision = Precision::kF64;
  Index threads = 1;
  Index max_batches_per_epoch = 0;  // 0: full epoch
  Index max_val_windows = 0;        // 0: all validation windows
  bool record_timing = true;        // false writes seconds = 0 for byte-stable logs

  void validate() const;
};

// Adam with bias correction, no weight decay.
template <typename Scalar>
class Adam {
 public:
  Adam(const ModelParams<Scalar>& like, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(like.zeros_like()), v_(like.zeros_like()), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads) {
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    const auto b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
    const auto lr = static_cast<Scalar>(lr_);
    const auto eps = static_cast<Scalar>(eps_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * grads[i];
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * grads[i].cwiseAbs2();
      const auto mhat = m_[i].array() / static_cast<Scalar>(c1);
      const auto vhat = v_[i].array() / static_cast<Scalar>(c2);
      params[i].array() -= lr * mhat / (vhat.sqrt() + eps);
    }
  }

  Index steps() const { return steps_; }

 private:
  ModelParams<Scalar> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  Index steps_ = 0;
};

template <typename Scalar>
struct BatchResult {
  double loss = 0.0;       // pred_loss + alpha * l_load
  double pred_loss = 0.0;  // mean Huber over the batch
  RoutingStats routing;
  ModelParams<Scalar> grads;  // empty unless requested
};

// Loss and exact gradient for one batch. Routing statistics are pooled over
// every routed token of the batch (all blocks, components and tokens), and
// top-r selections are held fixed during differentiation. Work is split into
// contiguous per-thread chunks and reduced in chunk order.
template <typename Scalar>
BatchResult<Scalar> batch_objective(const ContextModel<Scalar>& model, const ModelParams<Scalar>& params,
                                    std::span<const SampleRef> batch, double delta, double alpha, Index threads,
                                    bool with_grad);

// Reverse-mode gradient of a scalar loss recorded by `loss` on a fresh tape.
template <typename Scalar>
using LossClosure = std::function<typename Tape<Scalar>::Var(Tape<Scalar>&, const ModelParams<Scalar>&,
                                                             ModelParams<Scalar>*)>;

template <typename Scalar>
ModelParams<Scalar> gradient(const ModelParams<Scalar>& params, const LossClosure<Scalar>& loss) {
  ModelParams<Scalar> grads = params.zeros_like();
  Tape<Scalar> tape;
  auto out = loss(tape, params, &grads);
  tape.backward(out);
  return grads;
}

struct EpochRecord {
  Index epoch = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  double val_mae = 0.0;
  double l_load = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

std::string to_json_line(const EpochRecord& record);

struct TrainResult {
  ModelParams<double> params;  // best by validation MSE
  std::vector<EpochRecord> history;
  std::vector<double> step_losses;
  Index best_epoch = 0;
  Index steps = 0;
  bool diverged = false;
  std::string message;
};

TrainResult train(std::span<const WindowSet> train_sets, std::span<const WindowSet> val_sets,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const ModelParams<double>* initial = nullptr,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// ---- evaluation -----------------------------------------------------------

class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual Index horizon() const = 0;
  // Prediction in the window's normalized units. Routing may be null.
  virtual Eigen::VectorXd predict(const SeriesWindow& window, const BoundAnchors& anchors,
                                  RoutingAccumulator* routing) const = 0;
  virtual bool routes() const { return false; }
};

// Repeats the last lookback value over the horizon.
class PersistenceForecaster final : public Forecaster {
 public:
  explicit PersistenceForecaster(Index horizon) : horizon_(horizon) {}
  Index horizon() const override { return horizon_; }
  Eigen::VectorXd predict(const SeriesWindow& window, const BoundAnchors&, RoutingAccumulator*) const override {
    return Eigen::VectorXd::Constant(horizon_, window.lookback(window.lookback.size() - 1));
  }

 private:
  Index horizon_;
};

template <typename Scalar>
class ModelForecaster final : public Forecaster {
 public:
  ModelForecaster(const ModelConfig& config, ModelParams<Scalar> params)
      : model_(config), params_(std::move(params)) {}

  Index horizon() const override { return model_.config().T; }
  bool routes() const override { return model_.config().use_moe; }
  Eigen::VectorXd predict(const SeriesWindow& window, const BoundAnchors& anchors,
                          RoutingAccumulator* routing) const override;

  const ContextModel<Scalar>& model() const { return model_; }
  const ModelParams<Scalar>& params() const { return params_; }

 private:
  ContextModel<Scalar> model_;
  ModelParams<Scalar> params_;
};

extern template class ModelForecaster<double>;
extern template class ModelForecaster<float>;

struct EvalOptions {
  std::vector<Index> horizons;  // prefixes of the forecast; empty: full horizon
  bool raw_units = false;       // metrics after denormalization
  Index threads = 1;
  Index max_windows = 0;        // 0: all; otherwise an even subsample
};

struct HorizonMetrics {
  Index horizon = 0;
  double mse = 0.0;
  double mae = 0.0;
};

struct ForecastReport {
  std::vector<HorizonMetrics> metrics;
  Index windows = 0;
  bool raw_units = false;
  bool has_routing = false;
  RoutingStats routing;

  const HorizonMetrics& at(Index horizon) const;
  std::string to_json() const;
};

ForecastReport evaluate(std::span<const WindowSet> sets, const Forecaster& forecaster, const EvalOptions& options = {});

// Evaluates `source` on the target's test windows without any weight update.
// Target windows are normalized with the target's own train statistics.
ForecastReport zero_shot(const Forecaster& source, const Domain& target, Index lookback, Index horizon,
                         const EvalOptions& options = {});

}  // namespace contextst
