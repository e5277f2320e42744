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
#include "contextst/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace contextst {

double forecastability(const Eigen::VectorXd& series) {
  const Index L = series.size();
  if (L < 4 || L % 2 != 0) throw ShapeError("forecastability: series length must be even and >= 4");
  const Spectrum<double> spec = spectrum(series);
  const Eigen::VectorXd ac = spec.psd.tail(spec.psd.size() - 1);
  const double total = ac.sum();
  if (!(total > kDegenerateEnergy)) throw DataError("forecastability: series has no fluctuation energy");
  double entropy = 0.0;
  for (Index i = 0; i < ac.size(); ++i) {
    const double q = ac(i) / total;
    if (q > 0.0) entropy -= q * std::log(q);
  }
  const double score = 1.0 - entropy / std::log(static_cast<double>(ac.size()));
  return std::clamp(score, 0.0, 1.0);
}

void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[32];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_pgm(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = std::clamp(m(i, j), -1.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround((v + 1.0) * 127.5))));
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace contextst
