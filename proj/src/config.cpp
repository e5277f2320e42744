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
#include "contextst/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace contextst {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Index to_index(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return static_cast<Index>(out);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::filesystem::path> to_paths(const std::string& v) {
  std::vector<std::filesystem::path> out;
  for (const auto& item : split_list(v)) out.emplace_back(item);
  return out;
}

std::string join_paths(const std::vector<std::filesystem::path>& paths) {
  std::string out;
  for (std::size_t i = 0; i < paths.size(); ++i) out += (i ? "," : "") + paths[i].string();
  return out;
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, res.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(Index v) { return std::to_string(v); }

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + fmt(xs[i]);
  return out;
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::stringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(number) + ": empty key");
    kv.set(key, trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string& KeyValues::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing config key " + key);
  return it->second;
}

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::string> preset_names() {
  return {"etth1", "etth2", "ettm1", "ettm2", "electricity", "weather", "traffic"};
}

ModelConfig preset_model(const std::string& name) {
  ModelConfig c;
  c.P = 24;
  c.L = 96;
  c.T = 96;
  c.experts = 4;
  c.active = 2;
  auto row = [&c](Index K, Index D, Index H, Index J) {
    c.K = K;
    c.D = D;
    c.heads = H;
    c.blocks = J;
  };
  if (name == "etth1") {
    row(1, 256, 2, 1);
  } else if (name == "etth2") {
    row(2, 256, 2, 1);
  } else if (name == "ettm1" || name == "ettm2") {
    row(2, 256, 4, 2);
  } else if (name == "electricity" || name == "weather") {
    row(3, 512, 8, 4);
  } else if (name == "traffic") {
    row(4, 512, 8, 4);
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

SplitSpec parse_split(const std::string& text, const std::string& key) {
  const auto parts = split_list(text);
  if (parts.size() == 1) {
    auto s = SplitSpec::preset(parts[0]);
    if (!s) throw ConfigError(key + ": unknown split preset '" + text + "'");
    return *s;
  }
  if (parts.size() == 4 && parts[0] == "ratio") {
    return SplitSpec::ratios(to_double(key, parts[1]), to_double(key, parts[2]), to_double(key, parts[3]));
  }
  if (parts.size() == 4 && parts[0] == "borders") {
    return SplitSpec::borders(to_index(key, parts[1]), to_index(key, parts[2]), to_index(key, parts[3]));
  }
  throw ConfigError(key + ": expected a preset name, 'ratio,a,b,c' or 'borders,a,b,c'");
}

RunConfig RunConfig::from(const KeyValues& values) {
  RunConfig c;
  if (values.has("run.preset") && !values.get("run.preset").empty()) {
    c.preset = values.get("run.preset");
    c.model = preset_model(c.preset);
    if (auto s = SplitSpec::preset(c.preset)) c.split = *s;
  }

  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"run.preset", [&](auto&, auto& v) { c.preset = v; }},
      {"run.out", [&](auto&, auto& v) { c.out = v; }},
      {"run.checkpoint", [&](auto&, auto& v) { c.checkpoint = v; }},
      {"data.path", [&](auto&, auto& v) { c.data = to_paths(v); }},
      {"data.anchors", [&](auto&, auto& v) { c.anchors = to_paths(v); }},
      {"data.domain", [&](auto&, auto& v) { c.domain = v; }},
      {"data.target", [&](auto&, auto& v) { c.target = v; }},
      {"data.target_anchors", [&](auto&, auto& v) { c.target_anchors = v; }},
      {"data.target_domain", [&](auto&, auto& v) { c.target_domain = v; }},
      {"data.stride", [&](auto& k, auto& v) { c.stride = to_index(k, v); }},
      {"data.split", [&](auto& k, auto& v) { c.split = parse_split(v, k); }},
      {"model.K", [&](auto& k, auto& v) { c.model.K = to_index(k, v); }},
      {"model.P", [&](auto& k, auto& v) { c.model.P = to_index(k, v); }},
      {"model.L", [&](auto& k, auto& v) { c.model.L = to_index(k, v); }},
      {"model.T", [&](auto& k, auto& v) { c.model.T = to_index(k, v); }},
      {"model.D", [&](auto& k, auto& v) { c.model.D = to_index(k, v); }},
      {"model.H", [&](auto& k, auto& v) { c.model.heads = to_index(k, v); }},
      {"model.J", [&](auto& k, auto& v) { c.model.blocks = to_index(k, v); }},
      {"model.M", [&](auto& k, auto& v) { c.model.experts = to_index(k, v); }},
      {"model.r", [&](auto& k, auto& v) { c.model.active = to_index(k, v); }},
      {"model.context_dim", [&](auto& k, auto& v) { c.model.context_dim = to_index(k, v); }},
      {"model.kappa", [&](auto& k, auto& v) { c.model.kappa = to_index(k, v); }},
      {"model.ff_mult", [&](auto& k, auto& v) { c.model.ff_mult = to_index(k, v); }},
      {"model.activation",
       [&](auto& k, auto& v) {
         const auto act = parse_activation(v);
         if (!act) throw ConfigError(k + ": unknown activation '" + v + "'");
         c.model.activation = *act;
       }},
      {"model.norm_eps", [&](auto& k, auto& v) { c.model.norm_eps = to_double(k, v); }},
      {"model.use_context", [&](auto& k, auto& v) { c.model.use_context = to_bool(k, v); }},
      {"model.use_moe", [&](auto& k, auto& v) { c.model.use_moe = to_bool(k, v); }},
      {"train.lr", [&](auto& k, auto& v) { c.train.lr = to_double(k, v); }},
      {"train.epochs", [&](auto& k, auto& v) { c.train.epochs = to_index(k, v); }},
      {"train.batch_size", [&](auto& k, auto& v) { c.train.batch_size = to_index(k, v); }},
      {"train.delta", [&](auto& k, auto& v) { c.train.huber_delta = to_double(k, v); }},
      {"train.alpha", [&](auto& k, auto& v) { c.train.load_alpha = to_double(k, v); }},
      {"train.seed", [&](auto& k, auto& v) { c.train.seed = static_cast<std::uint64_t>(to_index(k, v)); }},
      {"train.patience", [&](auto& k, auto& v) { c.train.patience = to_index(k, v); }},
      {"train.threads", [&](auto& k, auto& v) { c.train.threads = to_index(k, v); }},
      {"train.max_batches", [&](auto& k, auto& v) { c.train.max_batches_per_epoch = to_index(k, v); }},
      {"train.max_val_windows", [&](auto& k, auto& v) { c.train.max_val_windows = to_index(k, v); }},
      {"train.precision",
       [&](auto& k, auto& v) {
         if (v == "f64") {
           c.train.precision = Precision::kF64;
         } else if (v == "f32") {
           c.train.precision = Precision::kF32;
         } else {
           throw ConfigError(k + ": expected f32 or f64");
         }
       }},
      {"eval.horizons",
       [&](auto& k, auto& v) {
         c.horizons.clear();
         for (const auto& h : split_list(v)) c.horizons.push_back(to_index(k, h));
       }},
      {"eval.raw", [&](auto& k, auto& v) { c.raw_units = to_bool(k, v); }},
      {"eval.max_windows", [&](auto& k, auto& v) { c.eval_max_windows = to_index(k, v); }},
      {"window.variable", [&](auto&, auto& v) { c.variable = v; }},
      {"window.start", [&](auto& k, auto& v) { c.start = to_index(k, v); }},
      {"window.length", [&](auto& k, auto& v) { c.length = to_index(k, v); }},
      {"window.count", [&](auto& k, auto& v) { c.windows = to_index(k, v); }},
      {"output.format", [&](auto&, auto& v) { c.format = v; }},
      {"output.series", [&](auto& k, auto& v) { c.write_series = to_bool(k, v); }},
  };
  for (const auto& [key, value] : values.entries()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  return c;
}

KeyValues RunConfig::to_values() const {
  KeyValues kv;
  kv.set("run.preset", preset);
  kv.set("run.out", out.string());
  kv.set("run.checkpoint", checkpoint.string());
  kv.set("data.path", join_paths(data));
  kv.set("data.anchors", join_paths(anchors));
  kv.set("data.domain", domain);
  kv.set("data.target", target.string());
  kv.set("data.target_anchors", target_anchors.string());
  kv.set("data.target_domain", target_domain);
  kv.set("data.stride", fmt(stride));
  if (split.mode == SplitSpec::Mode::kRatio) {
    kv.set("data.split", "ratio," + fmt(split.train) + "," + fmt(split.val) + "," + fmt(split.test));
  } else {
    kv.set("data.split", "borders," + fmt(split.train_end) + "," + fmt(split.val_end) + "," + fmt(split.test_end));
  }
  kv.set("model.K", fmt(model.K));
  kv.set("model.P", fmt(model.P));
  kv.set("model.L", fmt(model.L));
  kv.set("model.T", fmt(model.T));
  kv.set("model.D", fmt(model.D));
  kv.set("model.H", fmt(model.heads));
  kv.set("model.J", fmt(model.blocks));
  kv.set("model.M", fmt(model.experts));
  kv.set("model.r", fmt(model.active));
  kv.set("model.context_dim", fmt(model.context_dim));
  kv.set("model.kappa", fmt(model.kappa));
  kv.set("model.ff_mult", fmt(model.ff_mult));
  kv.set("model.activation", to_string(model.activation));
  kv.set("model.norm_eps", fmt(model.norm_eps));
  kv.set("model.use_context", fmt(model.use_context));
  kv.set("model.use_moe", fmt(model.use_moe));
  kv.set("train.lr", fmt(train.lr));
  kv.set("train.epochs", fmt(train.epochs));
  kv.set("train.batch_size", fmt(train.batch_size));
  kv.set("train.delta", fmt(train.huber_delta));
  kv.set("train.alpha", fmt(train.load_alpha));
  kv.set("train.seed", std::to_string(train.seed));
  kv.set("train.patience", fmt(train.patience));
  kv.set("train.threads", fmt(train.threads));
  kv.set("train.max_batches", fmt(train.max_batches_per_epoch));
  kv.set("train.max_val_windows", fmt(train.max_val_windows));
  kv.set("train.precision", train.precision == Precision::kF32 ? "f32" : "f64");
  kv.set("eval.horizons", join(horizons));
  kv.set("eval.raw", fmt(raw_units));
  kv.set("eval.max_windows", fmt(eval_max_windows));
  kv.set("window.variable", variable);
  kv.set("window.start", fmt(start));
  kv.set("window.length", fmt(length));
  kv.set("window.count", fmt(windows));
  kv.set("output.format", format);
  kv.set("output.series", fmt(write_series));
  return kv;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  split.validate();
  if (stride < 1) throw ConfigError("data.stride must be >= 1");
  if (!anchors.empty() && anchors.size() != data.size()) {
    throw ConfigError("data.anchors must list one file per data.path entry");
  }
  for (Index h : horizons) {
    if (h < 1 || h > model.T) {
      throw ConfigError("eval.horizons: " + std::to_string(h) + " is outside 1.." + std::to_string(model.T));
    }
  }
  if (format != "pgm" && format != "csv") throw ConfigError("output.format must be pgm or csv");
  if (windows < 1) throw ConfigError("window.count must be >= 1");
}

std::filesystem::path resolve_data_path(const std::filesystem::path& path) {
  if (path.empty() || std::filesystem::exists(path)) return path;
  if (const char* root = std::getenv("CONTEXTST_DATA_DIR"); root != nullptr && path.is_relative()) {
    const auto candidate = std::filesystem::path(root) / path;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return path;
}

void write_effective_config(const RunConfig& config, const std::filesystem::path& dir, const std::string& command) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (command + ".conf");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << config.to_values().to_text();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace contextst
