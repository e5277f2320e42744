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

#include "contextst/common.hpp"

#include <algorithm>
#include <vector>

namespace contextst {

// Routing statistics over a set of routed tokens.
//   F[e] = (1 / (r * tokens)) * #{tokens selecting e}
//   P[e] = (1 / tokens) * sum of gate weight on e
//   l_load = M * sum_e F[e] * P[e]
struct RoutingStats {
  Eigen::VectorXd F;
  Eigen::VectorXd P;
  double l_load = 0.0;
  Index tokens = 0;
};

double load_balance_loss(const RoutingStats& stats, Index experts);

class RoutingAccumulator {
 public:
  RoutingAccumulator() = default;
  RoutingAccumulator(Index experts, Index active)
      : counts_(Eigen::VectorXd::Zero(experts)), gate_sums_(Eigen::VectorXd::Zero(experts)), active_(active) {}

  // One routed token: selected expert indices and its full gate row.
  void add(const std::vector<Index>& selected, const Eigen::Ref<const Eigen::RowVectorXd>& gate_row) {
    for (Index e : selected) counts_(e) += 1.0;
    gate_sums_ += gate_row.transpose();
    ++tokens_;
  }

  void merge(const RoutingAccumulator& other) {
    if (other.tokens_ == 0) return;
    if (tokens_ == 0 && counts_.size() == 0) {
      *this = other;
      return;
    }
    counts_ += other.counts_;
    gate_sums_ += other.gate_sums_;
    tokens_ += other.tokens_;
  }

  Index tokens() const { return tokens_; }
  Index experts() const { return counts_.size(); }
  Index active() const { return active_; }
  const Eigen::VectorXd& counts() const { return counts_; }

  RoutingStats stats() const;

 private:
  Eigen::VectorXd counts_;
  Eigen::VectorXd gate_sums_;
  Index tokens_ = 0;
  Index active_ = 1;
};

// Indices of the r largest entries; ties go to the lower index.
template <typename Derived>
std::vector<Index> top_r(const Eigen::DenseBase<Derived>& logits, Index r) {
  std::vector<Index> order(static_cast<std::size_t>(logits.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&logits](Index a, Index b) { return logits(a) > logits(b); });
  order.resize(static_cast<std::size_t>(r));
  return order;
}

}  // namespace contextst
