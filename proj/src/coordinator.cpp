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

#include "contextst/coordinator.hpp"

namespace contextst {

template Spectrum<double> spectrum(const Eigen::MatrixBase<Vector<double>>&);
template Spectrum<float> spectrum(const Eigen::MatrixBase<Vector<float>>&);
template std::vector<Index> select_boundaries(const Spectrum<double>&, Index);
template std::vector<Index> select_boundaries(const Spectrum<float>&, Index);
template Coordinates<double> coordinate(const Eigen::MatrixBase<Vector<double>>&, const CoordinatorOptions&);
template Coordinates<float> coordinate(const Eigen::MatrixBase<Vector<float>>&, const CoordinatorOptions&);

}  // namespace contextst
