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

#include "contextst/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace contextst {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in, const std::string& where) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw IoError("truncated checkpoint while reading " + where);
  return v;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["K"] = c.K;
  j["P"] = c.P;
  j["L"] = c.L;
  j["T"] = c.T;
  j["D"] = c.D;
  j["heads"] = c.heads;
  j["blocks"] = c.blocks;
  j["experts"] = c.experts;
  j["active"] = c.active;
  j["context_dim"] = c.context_dim;
  j["kappa"] = c.kappa;
  j["ff_mult"] = c.ff_mult;
  j["activation"] = to_string(c.activation);
  j["norm_eps"] = c.norm_eps;
  j["use_context"] = c.use_context;
  j["use_moe"] = c.use_moe;
  return j.dump(2) + "\n";
}

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.K = j.at("K").get<Index>();
    c.P = j.at("P").get<Index>();
    c.L = j.at("L").get<Index>();
    c.T = j.at("T").get<Index>();
    c.D = j.at("D").get<Index>();
    c.heads = j.at("heads").get<Index>();
    c.blocks = j.at("blocks").get<Index>();
    c.experts = j.at("experts").get<Index>();
    c.active = j.at("active").get<Index>();
    c.context_dim = j.at("context_dim").get<Index>();
    c.kappa = j.at("kappa").get<Index>();
    c.ff_mult = j.at("ff_mult").get<Index>();
    const auto act = parse_activation(j.at("activation").get<std::string>());
    if (!act) throw ConfigError("unknown activation in model config");
    c.activation = *act;
    c.norm_eps = j.at("norm_eps").get<double>();
    c.use_context = j.at("use_context").get<bool>();
    c.use_moe = j.at("use_moe").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams<double>& params) {
  const auto registry = parameter_registry(config);
  if (registry.size() != params.size()) throw ShapeError("parameters do not match the configuration registry");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(kCheckpointMagic, 5);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  std::vector<float> buf;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamSpec& s = params.spec(i);
    const auto& m = params[i];
    put_u32(out, static_cast<std::uint32_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    if (s.vector) {
      put_u32(out, 1);
      put_u32(out, static_cast<std::uint32_t>(m.size()));
    } else {
      put_u32(out, 2);
      put_u32(out, static_cast<std::uint32_t>(m.rows()));
      put_u32(out, static_cast<std::uint32_t>(m.cols()));
    }
    buf.resize(static_cast<std::size_t>(m.size()));
    std::size_t k = 0;
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) buf[k++] = static_cast<float>(m(r, c));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
  std::ofstream side(checkpoint_sidecar(path));
  side << model_config_to_json(config);
  if (!side) throw IoError("failed writing checkpoint sidecar for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream side(checkpoint_sidecar(path));
  if (!side) throw IoError("missing checkpoint sidecar '" + checkpoint_sidecar(path).string() + "'");
  std::stringstream text;
  text << side.rdbuf();
  Checkpoint ckpt{model_config_from_json(text.str()), {}};
  ckpt.params = ModelParams<double>::zeros(ckpt.config);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kCheckpointMagic, 5) != 0) {
    throw IoError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const std::uint32_t count = get_u32(in, "record count");
  if (count != ckpt.params.size()) {
    throw ShapeError("checkpoint has " + std::to_string(count) + " records, configuration expects " +
                     std::to_string(ckpt.params.size()));
  }
  std::vector<bool> seen(ckpt.params.size(), false);
  std::vector<float> buf;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint32_t len = get_u32(in, "name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw IoError("truncated checkpoint name");
    const auto idx = ckpt.params.find(name);
    if (!idx) throw ShapeError("checkpoint record '" + name + "' is not part of the configuration");
    if (seen[*idx]) throw ShapeError("duplicate checkpoint record '" + name + "'");
    seen[*idx] = true;
    const ParamSpec& spec = ckpt.params.spec(*idx);
    const std::uint32_t rank = get_u32(in, name + " rank");
    std::vector<std::uint32_t> dims;
    for (std::uint32_t d = 0; d < rank; ++d) dims.push_back(get_u32(in, name + " dims"));
    const bool ok = spec.vector ? (rank == 1 && dims[0] == spec.cols)
                                : (rank == 2 && dims[0] == spec.rows && dims[1] == spec.cols);
    if (!ok) throw ShapeError("checkpoint record '" + name + "' has the wrong shape");
    auto& m = ckpt.params[*idx];
    buf.resize(static_cast<std::size_t>(m.size()));
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
      throw IoError("truncated checkpoint payload for '" + name + "'");
    }
    std::size_t k = 0;
    for (Index row = 0; row < m.rows(); ++row) {
      for (Index col = 0; col < m.cols(); ++col) m(row, col) = static_cast<double>(buf[k++]);
    }
  }
  if (!ckpt.params.all_finite()) throw NumericError("checkpoint contains non-finite weights");
  return ckpt;
}

}  // namespace contextst
