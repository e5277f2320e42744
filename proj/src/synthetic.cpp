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
#include "contextst/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace contextst {

Dataset make_sines(const SineSpec& spec) {
  if (spec.periods.size() != spec.amplitudes.size() || spec.periods.empty()) {
    throw ConfigError("sines: periods and amplitudes must be non-empty and equally long");
  }
  if (spec.length < 1 || spec.variables < 1) throw ConfigError("sines: length and variables must be positive");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset d;
  d.name = spec.name;
  d.frequency = "1h";
  d.timestamps.resize(static_cast<std::size_t>(spec.length));
  constexpr std::int64_t kStart = 1577836800;  // 2020-01-01 00:00:00
  for (Index t = 0; t < spec.length; ++t) d.timestamps[static_cast<std::size_t>(t)] = kStart + 3600 * t;
  for (Index v = 0; v < spec.variables; ++v) {
    std::vector<double> phases;
    for (std::size_t i = 0; i < spec.periods.size(); ++i) phases.push_back(phase(rng));
    Eigen::VectorXd x(spec.length);
    for (Index t = 0; t < spec.length; ++t) {
      double value = 0.0;
      for (std::size_t i = 0; i < spec.periods.size(); ++i) {
        value += spec.amplitudes[i] * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / spec.periods[i] + phases[i]);
      }
      x(t) = value + spec.noise * noise(rng);
    }
    d.variable_names.push_back("v" + std::to_string(v));
    d.variables.push_back(std::move(x));
  }
  return d;
}

}  // namespace contextst
