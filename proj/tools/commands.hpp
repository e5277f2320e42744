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

#include "contextst/config.hpp"

#include <filesystem>
#include <string>

namespace contextst::cli {

void cmd_decompose(const RunConfig& config);
void cmd_train(const RunConfig& config);
void cmd_eval(const RunConfig& config);
void cmd_zeroshot(const RunConfig& config);
void cmd_analyze(const RunConfig& config);

struct AnchorOptions {
  std::filesystem::path dataset;
  std::filesystem::path meta;
  std::filesystem::path out;
  std::string provider = "offline";
  std::string endpoint;
  std::string domain = "generic";
  std::filesystem::path tool;  // external generator; its output is validated
  std::string split;           // rows for the statistics; empty: dataset preset or default ratio
  Index dim = 384;
};

void cmd_make_anchors(const AnchorOptions& options);

}  // namespace contextst::cli
