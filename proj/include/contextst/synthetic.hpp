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

#include "contextst/data.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace contextst {

// Sum of sinusoids plus Gaussian noise, one hourly series per variable.
// Each variable draws its own phases from the seed.
struct SineSpec {
  std::string name = "synthetic";
  std::vector<double> periods = {24.0, 8.0};
  std::vector<double> amplitudes = {1.0, 0.5};
  double noise = 0.1;
  Index length = 2000;
  Index variables = 1;
  std::uint64_t seed = 0;
};

Dataset make_sines(const SineSpec& spec);

}  // namespace contextst
