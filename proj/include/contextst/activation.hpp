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

#include <cmath>
#include <optional>
#include <string>

namespace contextst {

enum class Activation { kGelu, kSilu, kRelu, kTanh, kIdentity };

std::string to_string(Activation act);
std::optional<Activation> parse_activation(const std::string& name);

// Elementwise activation and its derivative. GELU is the exact erf form.
template <typename Scalar>
Scalar activate(Activation act, Scalar x) {
  switch (act) {
    case Activation::kGelu:
      return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
    case Activation::kSilu:
      return x / (Scalar(1) + std::exp(-x));
    case Activation::kRelu:
      return x > Scalar(0) ? x : Scalar(0);
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kIdentity:
      break;
  }
  return x;
}

template <typename Scalar>
Scalar activate_derivative(Activation act, Scalar x) {
  switch (act) {
    case Activation::kGelu: {
      const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
      const Scalar pdf = std::exp(Scalar(-0.5) * x * x) / std::sqrt(Scalar(2) * Scalar(M_PI));
      return cdf + x * pdf;
    }
    case Activation::kSilu: {
      const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-x));
      return s * (Scalar(1) + x * (Scalar(1) - s));
    }
    case Activation::kRelu:
      return x > Scalar(0) ? Scalar(1) : Scalar(0);
    case Activation::kTanh: {
      const Scalar t = std::tanh(x);
      return Scalar(1) - t * t;
    }
    case Activation::kIdentity:
      break;
  }
  return Scalar(1);
}

}  // namespace contextst
