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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace contextst {

// Timestamps are kept as seconds since the Unix epoch. They are validated
// and carried through for reporting; the model never reads them.
struct Dataset {
  std::string name;
  std::vector<std::int64_t> timestamps;
  std::vector<std::string> variable_names;
  std::vector<Eigen::VectorXd> variables;
  std::string frequency;

  Index length() const { return static_cast<Index>(timestamps.size()); }
  Index num_variables() const { return static_cast<Index>(variables.size()); }
  // Throws DataError naming the variable if lookup fails.
  Index variable_index(const std::string& name) const;
};

Dataset load_csv(const std::filesystem::path& path);
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

// Parses "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]" and the ISO-8601 'T' form.
std::optional<std::int64_t> parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t seconds);

// Half-open [begin, end) index range into a dataset.
struct Range {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
  bool operator==(const Range&) const = default;
};

struct SplitSpec {
  enum class Mode { kRatio, kFixedBorders };
  Mode mode = Mode::kRatio;
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
  // Fixed-borders mode: train = [0, train_end), val = [train_end, val_end),
  // test = [val_end, test_end).
  Index train_end = 0;
  Index val_end = 0;
  Index test_end = 0;

  static SplitSpec ratios(double train, double val, double test);
  static SplitSpec borders(Index train_end, Index val_end, Index test_end);
  // Standard borders for etth1/etth2/ettm1/ettm2; nullopt for other names.
  static std::optional<SplitSpec> preset(const std::string& name);

  void validate() const;
};

struct Split {
  Range train;
  Range val;
  Range test;
};

Split split(const Dataset& dataset, const SplitSpec& spec);

struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<bool> degenerate;  // zero variance in train; std forced to 1

  double normalize(Index variable, double x) const {
    return (x - mean[variable]) / std[variable];
  }
  double denormalize(Index variable, double z) const {
    return z * std[variable] + mean[variable];
  }
};

// Statistics come from `train` only; the returned dataset is the whole input
// transformed with them, so the split ranges still apply.
Normalizer fit_normalizer(const Dataset& dataset, Range train);
Dataset apply_normalizer(const Dataset& dataset, const Normalizer& normalizer);
Dataset invert_normalizer(const Dataset& dataset, const Normalizer& normalizer);

struct SeriesWindow {
  Eigen::VectorXd lookback;
  Eigen::VectorXd target;
  Index variable_index = 0;
  Index origin_index = 0;  // dataset index of lookback[0]
  double mean = 0.0;
  double std = 1.0;
};

// Number of windows per variable for a segment of `length` points.
Index window_count(Index length, Index lookback, Index horizon, Index stride);

struct WindowOptions {
  Index lookback = 96;
  Index horizon = 96;
  Index stride = 1;
  // When set, lookbacks may start before segment.begin so that every target
  // lies inside the segment (the usual val/test convention).
  bool borrow_context = false;
};

// Windows are ordered by (variable, origin). `normalizer` fills the norm
// metadata and may be null when the data are already in model units.
std::vector<SeriesWindow> make_windows(const Dataset& dataset, Range segment,
                                       const WindowOptions& options,
                                       const Normalizer* normalizer = nullptr);

double mse(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& truth);
double mae(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& truth);

}  // namespace contextst
