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

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace contextst {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

// All library failures derive from Error. kind() is a short stable tag that
// the CLI prints as a machine-parsable prefix.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error("data", what) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace contextst
