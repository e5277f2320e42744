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

#include "contextst/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace contextst {
namespace {

std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

std::string infer_frequency(const std::vector<std::int64_t>& ts) {
  if (ts.size() < 2) return "";
  const std::int64_t step = ts[1] - ts[0];
  if (step % 86400 == 0) return std::to_string(step / 86400) + "d";
  if (step % 3600 == 0) return std::to_string(step / 3600) + "h";
  if (step % 60 == 0) return std::to_string(step / 60) + "min";
  return std::to_string(step) + "s";
}

}  // namespace

Index Dataset::variable_index(const std::string& wanted) const {
  for (std::size_t i = 0; i < variable_names.size(); ++i) {
    if (variable_names[i] == wanted) return static_cast<Index>(i);
  }
  throw DataError("dataset '" + name + "' has no variable '" + wanted + "'");
}

std::optional<std::int64_t> parse_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = ' ';
  int consumed = 0;
  const int n = std::sscanf(text.c_str(), "%4d-%2d-%2d%n%c%2d:%2d:%2d", &y, &mo,
                            &d, &consumed, &sep, &h, &mi, &s);
  if (n < 3) return std::nullopt;
  if (n > 3) {
    if (sep != ' ' && sep != 'T') return std::nullopt;
    if (n < 6) return std::nullopt;
  } else if (static_cast<std::size_t>(consumed) != text.size()) {
    return std::nullopt;
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) {
    return std::nullopt;
  }
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
         h * 3600 + mi * 60 + s;
}

std::string format_timestamp(std::int64_t seconds) {
  std::int64_t days = seconds >= 0 ? seconds / 86400 : (seconds - 86399) / 86400;
  std::int64_t rem = seconds - days * 86400;
  // civil_from_days
  days += 719468;
  const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(days - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u %02lld:%02lld:%02lld",
                static_cast<long long>(y), m, d, static_cast<long long>(rem / 3600),
                static_cast<long long>((rem % 3600) / 60), static_cast<long long>(rem % 60));
  return buf;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  Dataset ds;
  ds.name = path.stem().string();
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  auto header = split_fields(line);
  for (auto& h : header) h = trim(h);
  if (header.empty() || header[0] != "date") {
    throw DataError(path.string() + ": row 1: first column must be 'date'");
  }
  if (header.size() < 2) throw DataError(path.string() + ": no value columns");
  ds.variable_names.assign(header.begin() + 1, header.end());
  const std::size_t ncols = ds.variable_names.size();

  std::vector<std::vector<double>> columns(ncols);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError(path.string() + ": row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    const auto ts = parse_timestamp(trim(fields[0]));
    if (!ts) {
      throw DataError(path.string() + ": row " + std::to_string(row) +
                      ", column 'date': unparseable timestamp '" + fields[0] + "'");
    }
    if (!ds.timestamps.empty() && *ts <= ds.timestamps.back()) {
      throw DataError(path.string() + ": row " + std::to_string(row) +
                      ", column 'date': timestamps not strictly increasing");
    }
    ds.timestamps.push_back(*ts);
    for (std::size_t c = 0; c < ncols; ++c) {
      double v = 0.0;
      const std::string cell = trim(fields[c + 1]);
      if (!parse_double(cell, v) || !std::isfinite(v)) {
        throw DataError(path.string() + ": row " + std::to_string(row) + ", column '" +
                        ds.variable_names[c] + "': invalid value '" + cell + "'");
      }
      columns[c].push_back(v);
    }
  }
  if (ds.timestamps.empty()) throw DataError(path.string() + ": no data rows");
  for (auto& col : columns) {
    ds.variables.emplace_back(Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Index>(col.size())));
  }
  ds.frequency = infer_frequency(ds.timestamps);
  return ds;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "date";
  for (const auto& n : dataset.variable_names) out << ',' << n;
  out << '\n';
  char buf[64];
  for (Index t = 0; t < dataset.length(); ++t) {
    out << format_timestamp(dataset.timestamps[static_cast<std::size_t>(t)]);
    for (const auto& v : dataset.variables) {
      std::snprintf(buf, sizeof buf, "%.17g", v[t]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

SplitSpec SplitSpec::ratios(double train, double val, double test) {
  SplitSpec s;
  s.mode = Mode::kRatio;
  s.train = train;
  s.val = val;
  s.test = test;
  return s;
}

SplitSpec SplitSpec::borders(Index train_end, Index val_end, Index test_end) {
  SplitSpec s;
  s.mode = Mode::kFixedBorders;
  s.train_end = train_end;
  s.val_end = val_end;
  s.test_end = test_end;
  return s;
}

std::optional<SplitSpec> SplitSpec::preset(const std::string& name) {
  // 12/4/4 months of hourly (ETTh) or quarter-hourly (ETTm) records.
  constexpr Index kHourlyMonth = 30 * 24;
  if (name == "etth1" || name == "etth2") {
    return borders(12 * kHourlyMonth, 16 * kHourlyMonth, 20 * kHourlyMonth);
  }
  if (name == "ettm1" || name == "ettm2") {
    return borders(4 * 12 * kHourlyMonth, 4 * 16 * kHourlyMonth, 4 * 20 * kHourlyMonth);
  }
  return std::nullopt;
}

void SplitSpec::validate() const {
  if (mode == Mode::kRatio) {
    if (!(train > 0.0) || !(val > 0.0) || !(test > 0.0)) {
      throw ConfigError("split ratios must all be positive (empty segment)");
    }
    if (std::abs(train + val + test - 1.0) > 1e-9) {
      throw ConfigError("split ratios must sum to 1");
    }
  } else if (!(0 <= train_end && train_end <= val_end && val_end <= test_end)) {
    throw ConfigError("split borders must satisfy 0 <= train_end <= val_end <= test_end");
  }
}

Split split(const Dataset& dataset, const SplitSpec& spec) {
  spec.validate();
  const Index n = dataset.length();
  Split out;
  if (spec.mode == SplitSpec::Mode::kRatio) {
    const auto train = static_cast<Index>(std::floor(spec.train * static_cast<double>(n) + 1e-9));
    const auto test = static_cast<Index>(std::floor(spec.test * static_cast<double>(n) + 1e-9));
    out.train = {0, train};
    out.val = {train, n - test};
    out.test = {n - test, n};
  } else {
    if (spec.test_end > n) {
      throw DataError("split border " + std::to_string(spec.test_end) + " exceeds dataset length " +
                      std::to_string(n));
    }
    out.train = {0, spec.train_end};
    out.val = {spec.train_end, spec.val_end};
    out.test = {spec.val_end, spec.test_end};
  }
  if (out.train.size() <= 0) throw DataError("empty train segment");
  if (out.val.size() <= 0) throw DataError("empty validation segment");
  if (out.test.size() <= 0) throw DataError("empty test segment");
  return out;
}

Normalizer fit_normalizer(const Dataset& dataset, Range train) {
  if (train.size() <= 0) throw DataError("cannot fit normalizer on an empty train segment");
  Normalizer n;
  for (const auto& v : dataset.variables) {
    const auto seg = v.segment(train.begin, train.size());
    const double mean = seg.mean();
    const double var = (seg.array() - mean).square().mean();
    const double sd = std::sqrt(var);
    const bool degenerate = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
    n.mean.push_back(mean);
    n.std.push_back(degenerate ? 1.0 : sd);
    n.degenerate.push_back(degenerate);
  }
  return n;
}

Dataset apply_normalizer(const Dataset& dataset, const Normalizer& normalizer) {
  Dataset out = dataset;
  for (Index c = 0; c < out.num_variables(); ++c) {
    auto& v = out.variables[static_cast<std::size_t>(c)];
    v = (v.array() - normalizer.mean[static_cast<std::size_t>(c)]) / normalizer.std[static_cast<std::size_t>(c)];
  }
  return out;
}

Dataset invert_normalizer(const Dataset& dataset, const Normalizer& normalizer) {
  Dataset out = dataset;
  for (Index c = 0; c < out.num_variables(); ++c) {
    auto& v = out.variables[static_cast<std::size_t>(c)];
    v = v.array() * normalizer.std[static_cast<std::size_t>(c)] + normalizer.mean[static_cast<std::size_t>(c)];
  }
  return out;
}

Index window_count(Index length, Index lookback, Index horizon, Index stride) {
  if (stride < 1) throw ConfigError("window stride must be positive");
  if (lookback + horizon > length) return 0;
  return (length - lookback - horizon) / stride + 1;
}

std::vector<SeriesWindow> make_windows(const Dataset& dataset, Range segment,
                                       const WindowOptions& options,
                                       const Normalizer* normalizer) {
  const Index L = options.lookback;
  const Index T = options.horizon;
  if (L < 1 || T < 1) throw ConfigError("lookback and horizon must be positive");
  if (options.stride < 1) throw ConfigError("window stride must be positive");
  if (segment.begin < 0 || segment.end > dataset.length() || segment.size() < 0) {
    throw DataError("window segment outside dataset");
  }
  const Index begin = options.borrow_context ? std::max<Index>(0, segment.begin - L) : segment.begin;
  const Index length = segment.end - begin;
  if (L + T > length) {
    throw DataError("lookback + horizon (" + std::to_string(L + T) +
                    ") exceeds segment length " + std::to_string(length));
  }
  const Index per_var = window_count(length, L, T, options.stride);
  std::vector<SeriesWindow> out;
  out.reserve(static_cast<std::size_t>(per_var * dataset.num_variables()));
  for (Index c = 0; c < dataset.num_variables(); ++c) {
    const auto& v = dataset.variables[static_cast<std::size_t>(c)];
    for (Index i = 0; i < per_var; ++i) {
      const Index origin = begin + i * options.stride;
      SeriesWindow w;
      w.lookback = v.segment(origin, L);
      w.target = v.segment(origin + L, T);
      w.variable_index = c;
      w.origin_index = origin;
      if (normalizer != nullptr) {
        w.mean = normalizer->mean[static_cast<std::size_t>(c)];
        w.std = normalizer->std[static_cast<std::size_t>(c)];
      }
      out.push_back(std::move(w));
    }
  }
  return out;
}

namespace {
void check_metric_shapes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("metric shape mismatch: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
  if (a.size() == 0) throw ShapeError("metric over empty matrices");
}
}  // namespace

double mse(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& truth) {
  check_metric_shapes(prediction, truth);
  return (prediction - truth).array().square().mean();
}

double mae(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& truth) {
  check_metric_shapes(prediction, truth);
  return (prediction - truth).array().abs().mean();
}

}  // namespace contextst
