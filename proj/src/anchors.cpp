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

#include "contextst/anchors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace contextst {
namespace {

using Json = nlohmann::ordered_json;

Eigen::VectorXd read_vector(const Json& j, const std::string& what) {
  if (!j.is_array()) throw DataError("anchors: '" + what + "' must be an array");
  Eigen::VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw DataError("anchors: '" + what + "' has a non-numeric entry");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

Json write_vector(const Eigen::VectorXd& v) {
  Json arr = Json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kGelu: return "gelu";
    case Activation::kSilu: return "silu";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "gelu";
}

std::optional<Activation> parse_activation(const std::string& name) {
  if (name == "gelu") return Activation::kGelu;
  if (name == "silu") return Activation::kSilu;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  return std::nullopt;
}

void ContextAnchors::validate() const {
  if (dim < 1) throw DataError("anchors: dim must be positive");
  auto check = [this](const Eigen::VectorXd& v, const std::string& what) {
    if (v.size() != dim) {
      throw DataError("anchors: dim mismatch for " + what + ": expected " + std::to_string(dim) +
                      ", found " + std::to_string(v.size()));
    }
    if (!v.allFinite()) throw DataError("anchors: non-finite entry in " + what);
  };
  check(global, "global");
  for (const auto& [name, v] : variables) check(v, "variable '" + name + "'");
}

ContextAnchors parse_anchors(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("anchors: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("anchors: top level must be an object");
  const auto schema = j.value("schema", std::string());
  if (schema != kAnchorSchema) {
    throw DataError("anchors: unknown schema version '" + schema + "'");
  }
  ContextAnchors a;
  try {
    a.dataset = j.at("dataset").get<std::string>();
    a.dim = j.at("dim").get<Index>();
    a.global = read_vector(j.at("global"), "global");
    for (const auto& [name, vec] : j.at("variables").items()) {
      a.variables.emplace(name, read_vector(vec, "variables." + name));
    }
    a.source = j.value("source", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("anchors: ") + e.what());
  }
  a.validate();
  return a;
}

ContextAnchors load_anchors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open anchors file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_anchors(buf.str());
}

std::string serialize_anchors(const ContextAnchors& anchors) {
  anchors.validate();
  Json j;
  j["schema"] = kAnchorSchema;
  j["dataset"] = anchors.dataset;
  j["dim"] = anchors.dim;
  j["global"] = write_vector(anchors.global);
  Json vars = Json::object();
  for (const auto& [name, v] : anchors.variables) vars[name] = write_vector(v);  // std::map: sorted
  j["variables"] = std::move(vars);
  j["source"] = anchors.source;
  return j.dump() + "\n";
}

void write_anchors(const ContextAnchors& anchors, const std::filesystem::path& path) {
  const std::string text = serialize_anchors(anchors);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

BoundAnchors bind_anchors(const ContextAnchors& anchors, const Dataset& dataset) {
  anchors.validate();
  BoundAnchors bound;
  bound.global = anchors.global;
  std::string missing;
  for (const auto& name : dataset.variable_names) {
    const auto it = anchors.variables.find(name);
    if (it == anchors.variables.end()) {
      missing += (missing.empty() ? "" : ", ") + name;
      continue;
    }
    bound.variables.push_back(it->second);
  }
  if (!missing.empty()) {
    throw DataError("anchors for '" + anchors.dataset + "' lack variables: " + missing);
  }
  return bound;
}

BoundAnchors zero_anchors(Index dim, Index num_variables) {
  BoundAnchors b;
  b.global = Eigen::VectorXd::Zero(dim);
  b.variables.assign(static_cast<std::size_t>(num_variables), Eigen::VectorXd::Zero(dim));
  return b;
}

Eigen::VectorXd offline_embedding(std::string_view text, Index dim) {
  if (dim < 1) throw ConfigError("embedding dim must be positive");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  std::string padded = "\x02\x02";
  padded.append(text);
  padded += '\x03';
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (std::size_t j = i; j < i + 3; ++j) {
      h ^= static_cast<unsigned char>(padded[j]);
      h *= 1099511628211ULL;
    }
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 32;
    const auto bucket = static_cast<Index>(h % static_cast<std::uint64_t>(dim));
    v(bucket) += ((h >> 63) != 0U) ? 1.0 : -1.0;
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

VarStats variable_stats(const Eigen::VectorXd& series) {
  if (series.size() == 0) throw DataError("statistics of an empty series");
  VarStats s;
  std::vector<double> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.min = sorted.front();
  s.max = sorted.back();
  s.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  s.mean = series.mean();
  const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(series.size(), 0.0, static_cast<double>(series.size() - 1));
  const Eigen::ArrayXd tc = t - t.mean();
  const Eigen::ArrayXd xc = series.array() - s.mean;
  const double denom = tc.square().sum();
  const double slope = denom > 0.0 ? (tc * xc).sum() / denom : 0.0;
  const double sd = std::sqrt(xc.square().mean());
  if (std::abs(slope) < 1e-6 * sd || slope == 0.0) {
    s.trend = Trend::kFlat;
  } else {
    s.trend = slope > 0.0 ? Trend::kUp : Trend::kDown;
  }
  return s;
}

std::string stats_sentence(const VarStats& s) {
  const char* trend = s.trend == Trend::kUp ? "up" : (s.trend == Trend::kDown ? "down" : "flat");
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "In the history statistics of this variable, the minimum value is %.5f, the maximum value is %.5f, "
                "the median value is %.5f, the mean value is %.5f, and the overall trend is %s.",
                s.min, s.max, s.median, s.mean, trend);
  return buf;
}

AnchorTexts anchor_texts(const Dataset& dataset, const std::string& domain, Range stats_rows) {
  if (stats_rows.size() <= 0) stats_rows = {0, dataset.length()};
  if (stats_rows.begin < 0 || stats_rows.end > dataset.length()) {
    throw ShapeError("statistics rows exceed the dataset length");
  }
  AnchorTexts t;
  std::ostringstream global;
  global << "The " << dataset.name << " dataset is sourced from the field of " << domain
         << " with a frequency of " << dataset.frequency << ". The dataset consists of "
         << dataset.num_variables() << " variables.";
  t.global = global.str();
  for (std::size_t v = 0; v < dataset.variable_names.size(); ++v) {
    const auto& name = dataset.variable_names[v];
    const auto stats = variable_stats(dataset.variables[v].segment(stats_rows.begin, stats_rows.size()));
    t.variables.emplace_back(name, "The '" + name + "' variable is a " + domain + " measurement recorded at " +
                                       dataset.frequency + ". " + stats_sentence(stats));
  }
  return t;
}

ContextAnchors offline_anchors(const Dataset& dataset, const std::string& domain, Index dim, Range stats_rows) {
  const AnchorTexts texts = anchor_texts(dataset, domain, stats_rows);
  ContextAnchors a;
  a.dataset = dataset.name;
  a.dim = dim;
  a.global = offline_embedding(texts.global, dim);
  for (const auto& [name, text] : texts.variables) a.variables.emplace(name, offline_embedding(text, dim));
  a.source = "offline-hash";
  return a;
}

}  // namespace contextst
