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
#include "commands.hpp"

#include "contextst/analysis.hpp"
#include "contextst/anchors.hpp"
#include "contextst/checkpoint.hpp"
#include "contextst/coordinator.hpp"
#include "contextst/training.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace contextst::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

Dataset load_dataset(const fs::path& path) {
  if (path.empty()) throw ConfigError("no dataset given (data.path / --data)");
  return load_csv(resolve_data_path(path));
}

const fs::path& single_dataset(const RunConfig& config) {
  if (config.data.size() != 1) throw ConfigError("this command takes exactly one dataset");
  return config.data.front();
}

ContextAnchors anchors_for(const Dataset& dataset, const fs::path& file, const std::string& domain, Index dim,
                           const SplitSpec& spec) {
  if (!file.empty()) return load_anchors(resolve_data_path(file));
  return offline_anchors(dataset, domain, dim, split(dataset, spec).train);
}

std::vector<Domain> load_domains(const RunConfig& config) {
  if (config.data.empty()) throw ConfigError("no dataset given (data.path / --data)");
  std::vector<Domain> domains;
  for (std::size_t i = 0; i < config.data.size(); ++i) {
    Dataset raw = load_dataset(config.data[i]);
    const fs::path anchor_file = config.anchors.empty() ? fs::path() : config.anchors[i];
    const ContextAnchors anchors = anchors_for(raw, anchor_file, config.domain, config.model.context_dim, config.split);
    domains.push_back(prepare_domain(std::move(raw), config.split, &anchors, config.model.context_dim));
  }
  return domains;
}

std::vector<WindowSet> windows_of(const std::vector<Domain>& domains, Segment segment, const ModelConfig& model,
                                  Index stride) {
  std::vector<WindowSet> sets;
  for (const auto& d : domains) sets.push_back(domain_windows(d, segment, model.L, model.T, stride));
  return sets;
}

EvalOptions eval_options(const RunConfig& config) {
  EvalOptions o;
  o.horizons = config.horizons;
  o.raw_units = config.raw_units;
  o.threads = config.train.threads;
  o.max_windows = config.eval_max_windows;
  return o;
}

json metrics_json(const ForecastReport& report) { return json::parse(report.to_json()); }

void print_metrics(const std::string& label, const ForecastReport& report) {
  for (const auto& m : report.metrics) {
    std::printf("%s horizon=%lld mse=%.6f mae=%.6f\n", label.c_str(), static_cast<long long>(m.horizon), m.mse,
                m.mae);
  }
}

fs::path checkpoint_path(const RunConfig& config) {
  return config.checkpoint.empty() ? config.out / "model.ckpt" : config.checkpoint;
}

Index pick_variable(const Dataset& d, const std::string& name) {
  return name.empty() ? 0 : d.variable_index(name);
}

}  // namespace

void cmd_decompose(const RunConfig& config) {
  const Dataset d = load_dataset(single_dataset(config));
  const Index v = pick_variable(d, config.variable);
  const Index L = config.model.L;
  const Eigen::VectorXd& x = d.variables[static_cast<std::size_t>(v)];
  const Index span = L * config.windows;
  if (span > d.length()) throw DataError("dataset is shorter than the requested windows");
  const Index first = config.start < 0 ? d.length() - span : config.start;
  if (first + span > d.length()) throw DataError("window range runs past the end of the dataset");

  CoordinatorOptions opts;
  opts.components = config.model.K;
  opts.kappa = config.model.kappa;
  opts.patch_length = config.model.P;

  json report;
  report["dataset"] = d.name;
  report["variable"] = d.variable_names[static_cast<std::size_t>(v)];
  report["L"] = L;
  report["K"] = config.model.K;
  report["kappa"] = config.model.kappa;
  auto windows = json::array();
  for (Index w = 0; w < config.windows; ++w) {
    const Index start = first + w * L;
    const Eigen::VectorXd window = x.segment(start, L);
    const auto c = coordinate(window, opts);
    const auto& dec = c.decomposition;
    json entry;
    entry["start"] = start;
    entry["timestamp"] = format_timestamp(d.timestamps[static_cast<std::size_t>(start)]);
    if (config.model.K > 0) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(L);
      for (const auto& comp : dec.components) sum += comp;
      entry["boundaries"] = dec.boundaries;
      entry["energy_fraction"] = band_energy(dec.spectrum, dec.boundaries);
      entry["degenerate_spectrum"] = dec.spectrum.degenerate;
      entry["reconstruction_error"] = (sum - dec.detrended).cwiseAbs().maxCoeff();
    }
    if (config.write_series) {
      const fs::path csv = config.out / ("decompose_" + std::to_string(start) + ".csv");
      std::ostringstream s;
      s.precision(17);
      s << "index,original";
      if (config.model.K > 0) {
        s << ",trend,detrended";
        for (Index k = 0; k < config.model.K; ++k) s << ",component" << k;
      }
      s << '\n';
      for (Index t = 0; t < L; ++t) {
        s << start + t << ',' << dec.original(t);
        if (config.model.K > 0) {
          s << ',' << dec.trend(t) << ',' << dec.detrended(t);
          for (const auto& comp : dec.components) s << ',' << comp(t);
        }
        s << '\n';
      }
      write_text(csv, s.str());
      entry["series"] = csv.filename().string();
    }
    windows.push_back(entry);
  }
  report["windows"] = windows;
  write_text(config.out / "decompose.json", report.dump(2) + "\n");
  write_effective_config(config, config.out, "decompose");
  std::printf("wrote %s\n", (config.out / "decompose.json").string().c_str());
}

void cmd_train(const RunConfig& input) {
  RunConfig config = input;
  config.validate();
  // Wall-clock time is only logged when running multi-threaded; single
  // threaded runs keep the history byte-stable.
  config.train.record_timing = config.train.threads > 1;
  const auto domains = load_domains(config);
  const auto train_sets = windows_of(domains, Segment::kTrain, config.model, config.stride);
  const auto val_sets = windows_of(domains, Segment::kVal, config.model, 1);

  fs::create_directories(config.out);
  write_effective_config(config, config.out, "train");
  const fs::path history_path = config.out / "history.jsonl";
  std::ofstream history(history_path, std::ios::binary);
  if (!history) throw IoError("cannot write " + history_path.string());
  const auto result = train(train_sets, val_sets, config.model, config.train, nullptr, [&](const EpochRecord& r) {
    history << to_json_line(r) << '\n';
    history.flush();
    std::fprintf(stderr, "epoch %lld train_loss=%.6f val_mse=%.6f l_load=%.4f\n", static_cast<long long>(r.epoch),
                 r.train_loss, r.val_mse, r.l_load);
  });
  history.close();

  const fs::path ckpt = checkpoint_path(config);
  save_checkpoint(ckpt, config.model, result.params);
  if (result.diverged) throw NumericError(result.message + " (last good checkpoint kept at " + ckpt.string() + ")");

  // Report what a later `eval` of the written checkpoint will see.
  const Checkpoint stored = load_checkpoint(ckpt);
  const ModelForecaster<double> model(stored.config, stored.params);
  const auto test_sets = windows_of(domains, Segment::kTest, config.model, 1);
  const auto report = evaluate(test_sets, model, eval_options(config));
  json out;
  out["best_epoch"] = result.best_epoch;
  out["steps"] = result.steps;
  out["test"] = metrics_json(report);
  write_text(config.out / "train_report.json", out.dump(2) + "\n");
  print_metrics("test", report);
}

void cmd_eval(const RunConfig& input) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path(input));
  RunConfig config = input;
  config.model = ckpt.config;
  config.validate();
  const auto domains = load_domains(config);
  const auto sets = windows_of(domains, Segment::kTest, config.model, 1);
  const ModelForecaster<double> model(ckpt.config, ckpt.params);
  const PersistenceForecaster baseline(ckpt.config.T);
  const auto options = eval_options(config);
  const auto report = evaluate(sets, model, options);
  const auto base = evaluate(sets, baseline, options);
  json out;
  out["model"] = metrics_json(report);
  out["repeat_last"] = metrics_json(base);
  write_text(config.out / "eval.json", out.dump(2) + "\n");
  write_effective_config(config, config.out, "eval");
  print_metrics("model", report);
  print_metrics("repeat_last", base);
}

void cmd_zeroshot(const RunConfig& input) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path(input));
  RunConfig config = input;
  config.model = ckpt.config;
  config.validate();
  if (config.target.empty()) throw ConfigError("zeroshot needs a target dataset (data.target / --target)");
  Dataset raw = load_dataset(config.target);
  const ContextAnchors anchors = anchors_for(raw, config.target_anchors, config.target_domain, ckpt.config.context_dim,
                                            config.split);
  const Domain target = prepare_domain(std::move(raw), config.split, &anchors, ckpt.config.context_dim);
  const ModelForecaster<double> model(ckpt.config, ckpt.params);
  const PersistenceForecaster baseline(ckpt.config.T);
  const auto options = eval_options(config);
  const auto report = zero_shot(model, target, ckpt.config.L, ckpt.config.T, options);
  const auto base = zero_shot(baseline, target, ckpt.config.L, ckpt.config.T, options);
  json out;
  out["target"] = target.name;
  out["model"] = metrics_json(report);
  out["repeat_last"] = metrics_json(base);
  write_text(config.out / "zeroshot.json", out.dump(2) + "\n");
  write_effective_config(config, config.out, "zeroshot");
  print_metrics("model", report);
  print_metrics("repeat_last", base);
}

void cmd_analyze(const RunConfig& config) {
  const Dataset d = load_dataset(single_dataset(config));
  const Index v = pick_variable(d, config.variable);
  const Eigen::VectorXd& x = d.variables[static_cast<std::size_t>(v)];
  const Index n = config.length > 0 ? config.length : config.model.L;
  if (n < 2 || n > d.length()) throw DataError("window length must be in 2.." + std::to_string(d.length()));
  const Index start = config.start < 0 ? d.length() - n : config.start;
  if (start + n > d.length()) throw DataError("window runs past the end of the dataset");
  const Eigen::VectorXd window = x.segment(start, n);

  const Eigen::MatrixXd field = gaf(window);
  const fs::path image = config.out / (config.format == "csv" ? "gaf.csv" : "gaf.pgm");
  fs::create_directories(config.out);
  if (config.format == "csv") {
    write_matrix_csv(field, image);
  } else {
    write_pgm(field, image);
  }

  json out;
  out["dataset"] = d.name;
  out["variable"] = d.variable_names[static_cast<std::size_t>(v)];
  out["start"] = start;
  out["length"] = n;
  out["gaf"] = image.filename().string();
  const Index even = n - n % 2;
  if (even >= 4) {
    out["window_forecastability"] = forecastability(window.head(even));
  }
  const Index full = d.length() - d.length() % 2;
  if (full >= 4) out["series_forecastability"] = forecastability(x.head(full));
  write_text(config.out / "analysis.json", out.dump(2) + "\n");
  write_effective_config(config, config.out, "analyze");
  std::printf("%s", out.dump(2).c_str());
  std::printf("\n");
}

namespace {

std::vector<Eigen::VectorXd> http_embed(const std::string& endpoint, const std::vector<std::string>& texts, Index dim) {
  const auto scheme_end = endpoint.find("://");
  if (endpoint.rfind("http://", 0) != 0 || scheme_end == std::string::npos) {
    throw ConfigError("--endpoint must be an http:// URL");
  }
  const auto path_begin = endpoint.find('/', scheme_end + 3);
  const std::string host = endpoint.substr(0, path_begin);
  const std::string path = path_begin == std::string::npos ? "/" : endpoint.substr(path_begin);
  httplib::Client client(host);
  client.set_read_timeout(60, 0);
  json body;
  body["texts"] = texts;
  httplib::Result res;
  for (int attempt = 0; attempt < 3; ++attempt) {
    res = client.Post(path, body.dump(), "application/json");
    if (res && res->status == 200) break;
  }
  if (!res) throw IoError("embedding request to " + endpoint + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw IoError("embedding service returned HTTP " + std::to_string(res->status));
  const auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("embeddings") || !reply["embeddings"].is_array()) {
    throw DataError("embedding service reply lacks an 'embeddings' array");
  }
  const auto& rows = reply["embeddings"];
  if (rows.size() != texts.size()) throw DataError("embedding service returned the wrong number of vectors");
  std::vector<Eigen::VectorXd> out;
  for (const auto& row : rows) {
    const auto values = row.get<std::vector<double>>();
    if (static_cast<Index>(values.size()) != dim) {
      throw DataError("embedding has dim " + std::to_string(values.size()) + ", expected " + std::to_string(dim));
    }
    out.push_back(Eigen::Map<const Eigen::VectorXd>(values.data(), dim));
  }
  return out;
}

}  // namespace

void cmd_make_anchors(const AnchorOptions& options) {
  if (options.out.empty()) throw ConfigError("make-anchors needs --out");
  if (options.dim < 1) throw ConfigError("--dim must be positive");
  if (!options.tool.empty()) {
    std::string cmd = "\"" + options.tool.string() + "\" make-anchors --dataset \"" + options.dataset.string() +
                      "\" --out \"" + options.out.string() + "\" --provider " + options.provider + " --dim " +
                      std::to_string(options.dim);
    if (!options.meta.empty()) cmd += " --meta \"" + options.meta.string() + "\"";
    if (!options.endpoint.empty()) cmd += " --endpoint \"" + options.endpoint + "\"";
    if (std::system(cmd.c_str()) != 0) throw IoError("anchor tool failed: " + cmd);
    const ContextAnchors a = load_anchors(options.out);
    std::printf("validated %s (%zu variables, dim %lld)\n", options.out.string().c_str(), a.variables.size(),
                static_cast<long long>(a.dim));
    return;
  }

  Dataset d = load_dataset(options.dataset);
  std::string domain = options.domain;
  if (!options.meta.empty()) {
    std::ifstream in(resolve_data_path(options.meta));
    if (!in) throw IoError("cannot read " + options.meta.string());
    const auto meta = nlohmann::json::parse(in, nullptr, false);
    if (meta.is_discarded() || !meta.is_object()) throw DataError(options.meta.string() + ": not a JSON object");
    if (meta.contains("name")) d.name = meta["name"].get<std::string>();
    if (meta.contains("domain")) domain = meta["domain"].get<std::string>();
    if (meta.contains("frequency")) d.frequency = meta["frequency"].get<std::string>();
  }

  SplitSpec spec;
  if (!options.split.empty()) {
    spec = parse_split(options.split, "--split");
  } else {
    std::string lower = d.name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (auto preset = SplitSpec::preset(lower)) spec = *preset;
  }
  const Range train_rows = split(d, spec).train;

  ContextAnchors anchors;
  if (options.provider == "offline") {
    anchors = offline_anchors(d, domain, options.dim, train_rows);
  } else if (options.provider == "http") {
    const AnchorTexts texts = anchor_texts(d, domain, train_rows);
    std::vector<std::string> batch{texts.global};
    for (const auto& [name, text] : texts.variables) batch.push_back(text);
    const auto vectors = http_embed(options.endpoint, batch, options.dim);
    anchors.dataset = d.name;
    anchors.dim = options.dim;
    anchors.global = vectors[0];
    for (std::size_t i = 0; i < texts.variables.size(); ++i) {
      anchors.variables.emplace(texts.variables[i].first, vectors[i + 1]);
    }
    anchors.source = "http:" + options.endpoint;
  } else {
    throw ConfigError("--provider must be offline or http");
  }
  write_anchors(anchors, options.out);
  std::printf("wrote %s (%zu variables, dim %lld)\n", options.out.string().c_str(), anchors.variables.size(),
              static_cast<long long>(anchors.dim));
}

}  // namespace contextst::cli
