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

#include <CLI11.hpp>

#include <cstdio>
#include <deque>
#include <exception>
#include <string>
#include <vector>

namespace {

using contextst::KeyValues;

// Collects flags that map one-to-one onto config keys.
struct Overrides {
  KeyValues values;
  std::deque<std::pair<std::string, std::string>> slots;  // (key, raw value); stable addresses

  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = slots.emplace_back(key, std::string());
    app->add_option(flag, slot.second, help + " [" + key + "]");
  }

  void collect() {
    for (const auto& [key, value] : slots) {
      if (!value.empty()) values.set(key, value);
    }
  }
};

void single_line(std::string& s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contextst: cross-domain time series forecasting with spectral coordination and context anchors"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file, out, preset;
  std::vector<std::string> sets;
  std::string seed, threads;
  app.add_option("--config", config_file, "flat key = value config file");
  app.add_option("--seed", seed, "random seed [train.seed]");
  app.add_option("--threads", threads, "worker threads; 1 is fully deterministic [train.threads]");
  app.add_option("--out", out, "output directory [run.out]");
  app.add_option("--preset", preset, "model preset: etth1 etth2 ettm1 ettm2 electricity weather traffic");
  app.add_option("--set", sets, "extra key=value overrides (repeatable)");

  Overrides ov;
  auto data_flags = [&ov](CLI::App* cmd) {
    ov.bind(cmd, "--data", "data.path", "dataset CSV (comma list for several sources)");
    ov.bind(cmd, "--anchors", "data.anchors", "anchor JSON per dataset");
    ov.bind(cmd, "--domain", "data.domain", "domain word for generated anchors");
    ov.bind(cmd, "--split", "data.split", "split preset or ratio,a,b,c or borders,a,b,c");
  };

  auto* decompose = app.add_subcommand("decompose", "spectral decomposition report for lookback windows");
  data_flags(decompose);
  ov.bind(decompose, "--variable", "window.variable", "variable name");
  ov.bind(decompose, "--start", "window.start", "first window start index");
  ov.bind(decompose, "--windows", "window.count", "consecutive windows");
  ov.bind(decompose, "-K,--components", "model.K", "number of frequency bands");
  bool series = false;
  decompose->add_flag("--series", series, "also write per-window component CSVs");

  auto* train = app.add_subcommand("train", "train a model and write checkpoint + history");
  data_flags(train);
  ov.bind(train, "--epochs", "train.epochs", "epochs");
  ov.bind(train, "--precision", "train.precision", "f64 or f32");
  ov.bind(train, "--checkpoint", "run.checkpoint", "checkpoint path");
  bool no_context = false, dense = false;
  train->add_flag("--no-context", no_context, "drop context anchors from the model");
  train->add_flag("--dense", dense, "replace the expert mixture with one dense feed-forward block");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on test windows");
  data_flags(eval);
  ov.bind(eval, "--checkpoint", "run.checkpoint", "checkpoint path");
  ov.bind(eval, "--horizons", "eval.horizons", "comma list of horizon prefixes");
  bool raw = false;
  eval->add_flag("--raw", raw, "metrics in original units");

  auto* zeroshot = app.add_subcommand("zeroshot", "evaluate a checkpoint on an unseen target dataset");
  ov.bind(zeroshot, "--checkpoint", "run.checkpoint", "checkpoint path");
  ov.bind(zeroshot, "--target", "data.target", "target dataset CSV");
  ov.bind(zeroshot, "--target-anchors", "data.target_anchors", "target anchor JSON");
  ov.bind(zeroshot, "--target-domain", "data.target_domain", "domain word for generated anchors");
  ov.bind(zeroshot, "--split", "data.split", "split of the target");
  ov.bind(zeroshot, "--horizons", "eval.horizons", "comma list of horizon prefixes");
  zeroshot->add_flag("--raw", raw, "metrics in original units");

  auto* analyze = app.add_subcommand("analyze", "Gramian angular field image and forecastability");
  ov.bind(analyze, "--data", "data.path", "dataset CSV");
  ov.bind(analyze, "--variable", "window.variable", "variable name");
  ov.bind(analyze, "--start", "window.start", "window start index");
  ov.bind(analyze, "--length", "window.length", "window length");
  ov.bind(analyze, "--format", "output.format", "pgm or csv");

  contextst::cli::AnchorOptions anchor_opts;
  auto* make_anchors = app.add_subcommand("make-anchors", "write an anchor JSON file for a dataset");
  make_anchors->add_option("--dataset", anchor_opts.dataset, "dataset CSV")->required();
  make_anchors->add_option("--meta", anchor_opts.meta, "metadata JSON (name, domain, frequency)");
  make_anchors->add_option("--out", anchor_opts.out, "anchor JSON to write")->required();
  make_anchors->add_option("--provider", anchor_opts.provider, "offline or http");
  make_anchors->add_option("--endpoint", anchor_opts.endpoint, "embedding service URL for --provider http");
  make_anchors->add_option("--dim", anchor_opts.dim, "embedding width");
  make_anchors->add_option("--domain", anchor_opts.domain, "domain word used in the descriptions");
  make_anchors->add_option("--tool", anchor_opts.tool, "external anchor generator to run instead");
  make_anchors->add_option("--split", anchor_opts.split, "rows the statistics are taken from (preset, ratio,a,b,c or borders,a,b,c)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    single_line(msg);
    std::fprintf(stderr, "error[usage]: %s\n", msg.c_str());
    return 2;
  }

  try {
    if (make_anchors->parsed()) {
      contextst::cli::cmd_make_anchors(anchor_opts);
      return 0;
    }
    KeyValues values;
    if (!config_file.empty()) values = KeyValues::load(config_file);
    KeyValues cli;
    if (!preset.empty()) cli.set("run.preset", preset);
    if (!seed.empty()) cli.set("train.seed", seed);
    if (!threads.empty()) cli.set("train.threads", threads);
    if (!out.empty()) cli.set("run.out", out);
    ov.collect();
    cli.merge(ov.values);
    if (series) cli.set("output.series", "true");
    if (no_context) cli.set("model.use_context", "false");
    if (dense) cli.set("model.use_moe", "false");
    if (raw) cli.set("eval.raw", "true");
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw contextst::ConfigError("--set expects key=value, got '" + s + "'");
      cli.set(s.substr(0, eq), s.substr(eq + 1));
    }
    values.merge(cli);
    const auto config = contextst::RunConfig::from(values);
    config.validate();

    if (decompose->parsed()) contextst::cli::cmd_decompose(config);
    if (train->parsed()) contextst::cli::cmd_train(config);
    if (eval->parsed()) contextst::cli::cmd_eval(config);
    if (zeroshot->parsed()) contextst::cli::cmd_zeroshot(config);
    if (analyze->parsed()) contextst::cli::cmd_analyze(config);
  } catch (const contextst::Error& e) {
    std::string msg = e.what();
    single_line(msg);
    std::fprintf(stderr, "error[%s]: %s\n", e.kind().c_str(), msg.c_str());
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    single_line(msg);
    std::fprintf(stderr, "error[internal]: %s\n", msg.c_str());
    return 1;
  }
  return 0;
}
