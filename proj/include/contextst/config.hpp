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
#include "contextst/model.hpp"
#include "contextst/training.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace contextst {

// Flat `dotted.key = value` text. '#' starts a comment; blank lines are
// ignored; a repeated key keeps the last value.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  // Overlays `other` on top of this.
  void merge(const KeyValues& other);
  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> entries_;
};

// Model settings for etth1, etth2, ettm1, ettm2, electricity, weather,
// traffic. Throws ConfigError for unknown names.
ModelConfig preset_model(const std::string& name);

// "etth1"-style preset, "ratio,a,b,c" or "borders,a,b,c".
SplitSpec parse_split(const std::string& text, const std::string& key = "data.split");
std::vector<std::string> preset_names();

struct RunConfig {
  std::string preset;
  std::vector<std::filesystem::path> data;     // one or more source datasets
  std::vector<std::filesystem::path> anchors;  // empty, or one per dataset
  std::string domain = "generic";
  std::filesystem::path target;
  std::filesystem::path target_anchors;
  std::string target_domain = "generic";
  SplitSpec split;
  Index stride = 1;

  ModelConfig model;
  TrainConfig train;

  std::filesystem::path checkpoint;
  std::filesystem::path out = "out";
  std::vector<Index> horizons;
  bool raw_units = false;
  Index eval_max_windows = 0;

  std::string variable;     // analyze/decompose: empty selects the first variable
  Index start = -1;         // analyze/decompose: window start; -1 is the last full window
  Index length = 0;         // analyze: window length; 0 uses model.L
  Index windows = 1;        // decompose: consecutive windows (stride L)
  std::string format = "pgm";
  bool write_series = false;

  // Defaults, then the preset named by run.preset, then every given key.
  // Unknown keys and malformed values raise ConfigError.
  static RunConfig from(const KeyValues& values);
  KeyValues to_values() const;
  void validate() const;
};

// Returns `path` if it exists, else CONTEXTST_DATA_DIR/path when that exists,
// else `path` unchanged (the loader reports the failure).
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

// Writes the fully resolved configuration as `<dir>/<command>.conf`.
void write_effective_config(const RunConfig& config, const std::filesystem::path& dir, const std::string& command);

}  // namespace contextst
