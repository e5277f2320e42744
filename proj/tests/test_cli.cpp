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
#include "contextst/checkpoint.hpp"
#include "contextst/synthetic.hpp"
#include "process.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <numbers>

using namespace contextst;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "contextst_cli_tests";
const std::string kCli = CONTEXTST_CLI;

// Small model flags shared by the training tests.
const std::string kSmall =
    " --set model.L=32 --set model.T=8 --set model.P=8 --set model.K=2 --set model.D=16 --set model.H=2"
    " --set model.J=1 --set model.M=4 --set model.r=2 --set model.kappa=3 --set model.context_dim=16"
    " --set train.batch_size=32 --epochs 2";

const fs::path& sine_csv() {
  static const fs::path path = [] {
    fs::create_directories(kRoot);
    SineSpec s;
    s.name = "sines";
    s.length = 600;
    s.variables = 2;
    s.seed = 3;
    const fs::path p = kRoot / "sines.csv";
    write_csv(make_sines(s), p);
    return p;
  }();
  return path;
}

process::Result cli(const std::string& args) { return process::run(kCli + " " + args, kRoot / "proc"); }

json read_json(const fs::path& p) { return json::parse(process::slurp(p)); }

}  // namespace

TEST_CASE("bad input path fails with one diagnostic line") {
  const auto r = cli("decompose --data /no/such/file.csv --out " + (kRoot / "bad").string());
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error[io]: ", 0) == 0);
  CHECK(r.err.find('\n') == r.err.size() - 1);
  const auto u = cli("frobnicate");
  CHECK(u.code != 0);
  CHECK(u.err.rfind("error[usage]: ", 0) == 0);
  const auto k = cli("decompose --data " + sine_csv().string() + " --set model.Q=1");
  CHECK(k.code != 0);
  CHECK(k.err.rfind("error[config]: ", 0) == 0);
}

TEST_CASE("decompose reports boundaries") {
  const fs::path out = kRoot / "dec1";
  REQUIRE(cli("decompose --data " + sine_csv().string() + " -K 1 --out " + out.string()).code == 0);
  const auto one = read_json(out / "decompose.json");
  CHECK(one["windows"][0]["boundaries"] == json::array({0, 49}));

  const fs::path out3 = kRoot / "dec3";
  REQUIRE(cli("--preset electricity decompose --data " + sine_csv().string() + " --series --windows 2 --out " +
              out3.string())
              .code == 0);
  const auto three = read_json(out3 / "decompose.json");
  CHECK(three["K"] == 3);
  CHECK(three["windows"].size() == 2);
  CHECK(three["windows"][0]["boundaries"].size() == 4);
  CHECK(three["windows"][1]["reconstruction_error"].get<double>() < 1e-12);
  CHECK(fs::exists(out3 / three["windows"][0]["series"].get<std::string>()));
  CHECK(fs::exists(out3 / "decompose.conf"));
}

TEST_CASE("seeded single-threaded training is byte-stable") {
  const fs::path a = kRoot / "train_a", b = kRoot / "train_b";
  const std::string base = "train --data " + sine_csv().string() + kSmall + " --threads 1 --seed 7 --out ";
  REQUIRE(cli(base + a.string()).code == 0);
  REQUIRE(cli(base + b.string()).code == 0);
  CHECK(process::slurp(a / "history.jsonl") == process::slurp(b / "history.jsonl"));
  CHECK(process::slurp(a / "model.ckpt") == process::slurp(b / "model.ckpt"));
  CHECK(!process::slurp(a / "history.jsonl").empty());

  // Re-running from the written effective config reproduces the run.
  const fs::path c = kRoot / "train_c";
  REQUIRE(cli("train --config " + (a / "train.conf").string() + " --out " + c.string()).code == 0);
  CHECK(process::slurp(a / "history.jsonl") == process::slurp(c / "history.jsonl"));
  CHECK(process::slurp(a / "model.ckpt") == process::slurp(c / "model.ckpt"));
}

TEST_CASE("eval reproduces the training report and lists horizons") {
  const fs::path dir = kRoot / "train_eval";
  REQUIRE(cli("train --data " + sine_csv().string() + kSmall + " --out " + dir.string()).code == 0);
  REQUIRE(cli("eval --data " + sine_csv().string() + " --out " + dir.string()).code == 0);
  const auto trained = read_json(dir / "train_report.json");
  const auto evaluated = read_json(dir / "eval.json");
  CHECK(trained["test"] == evaluated["model"]);

  REQUIRE(cli("eval --data " + sine_csv().string() + " --horizons 2,4,6,8 --out " + (kRoot / "eval4").string()).code ==
          1);  // checkpoint lives elsewhere
  REQUIRE(cli("eval --data " + sine_csv().string() + " --checkpoint " + (dir / "model.ckpt").string() +
              " --horizons 2,4,6,8 --out " + (kRoot / "eval4").string())
              .code == 0);
  const auto four = read_json(kRoot / "eval4" / "eval.json");
  CHECK(four["model"]["metrics"].size() == 4);
  CHECK(four["repeat_last"]["metrics"].size() == 4);

  REQUIRE(cli("zeroshot --checkpoint " + (dir / "model.ckpt").string() + " --target " + sine_csv().string() +
              " --out " + (kRoot / "zs").string())
              .code == 0);
  const auto zs = read_json(kRoot / "zs" / "zeroshot.json");
  CHECK(zs["model"] == evaluated["model"]);
}

TEST_CASE("no-context flag reaches the model") {
  const fs::path dir = kRoot / "noctx";
  REQUIRE(cli("train --no-context --data " + sine_csv().string() + kSmall + " --out " + dir.string()).code == 0);
  const auto ckpt = load_checkpoint(dir / "model.ckpt");
  CHECK(!ckpt.config.use_context);
  const fs::path dense = kRoot / "dense";
  REQUIRE(cli("train --dense --data " + sine_csv().string() + kSmall + " --out " + dense.string()).code == 0);
  CHECK(!load_checkpoint(dense / "model.ckpt").config.use_moe);
}

TEST_CASE("analyze writes an n x n image and the score") {
  fs::create_directories(kRoot);
  Dataset d = make_sines({});
  d.name = "pure";
  d.variables[0] = Eigen::VectorXd(d.length());
  for (Index t = 0; t < d.length(); ++t) d.variables[0](t) = std::sin(2.0 * std::numbers::pi * t / 25.0);
  write_csv(d, kRoot / "pure.csv");
  const fs::path out = kRoot / "an";
  // 100 samples hold exactly four periods.
  REQUIRE(cli("analyze --data " + (kRoot / "pure.csv").string() + " --start 0 --length 100 --out " + out.string())
              .code == 0);
  const auto report = read_json(out / "analysis.json");
  CHECK(std::abs(report["window_forecastability"].get<double>() - 1.0) < 1e-9);
  const std::string pgm = process::slurp(out / "gaf.pgm");
  CHECK(pgm.rfind("P5\n100 100\n255\n", 0) == 0);
  CHECK(pgm.size() == std::string("P5\n100 100\n255\n").size() + 100 * 100);

  d.variables[0].setConstant(1.0);
  write_csv(d, kRoot / "flat.csv");
  const auto r = cli("analyze --data " + (kRoot / "flat.csv").string() + " --out " + (kRoot / "an2").string());
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error[data]: ", 0) == 0);
}

TEST_CASE("make-anchors output loads through the anchor loader") {
  const fs::path out = kRoot / "anchors.json";
  REQUIRE(cli("make-anchors --dataset " + sine_csv().string() + " --dim 24 --domain synthetic --out " + out.string())
              .code == 0);
  const auto a = load_anchors(out);
  CHECK(a.dim == 24);
  CHECK(a.variables.size() == 2);
  const fs::path dir = kRoot / "with_anchors";
  REQUIRE(cli("train --data " + sine_csv().string() + " --anchors " + out.string() + kSmall +
              " --set model.context_dim=24 --out " + dir.string())
              .code == 0);
  const auto bad = cli("train --data " + sine_csv().string() + " --anchors " + out.string() + kSmall + " --out " +
                       (kRoot / "bad_anchor").string());
  CHECK(bad.code != 0);
  CHECK(bad.err.rfind("error[data]: ", 0) == 0);
}
