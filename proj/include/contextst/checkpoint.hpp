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

#include "contextst/model.hpp"

#include <filesystem>
#include <string>

namespace contextst {

// Binary layout (little-endian): "CTST1", u32 record count, then per record
// u32 name length, UTF-8 name, u32 rank, u32 dims[rank], f32 payload in
// row-major order. The model configuration lives in "<path>.json".
inline constexpr char kCheckpointMagic[] = "CTST1";

struct Checkpoint {
  ModelConfig config;
  ModelParams<double> params;
};

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams<double>& params);
// Verifies that the stored names and shapes are exactly the registry of the
// sidecar configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace contextst
