/*
 * Copyright 2026 The KGLab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "kglab/app.h"
#include "testing.h"

namespace kglab {
namespace {

namespace fs = std::filesystem;
using testing::ReadText;
using testing::WriteText;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "kglab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Twenty letters in a ring; a config file next to the data with relative
// paths.
fs::path MakeProject(const std::string& name, const std::string& extra = "") {
  const fs::path dir = testing::TempDir(name);
  fs::create_directories(dir / "data");
  static const char* kNames[] = {"alpha", "bravo", "charlie", "delta", "echo",
                                 "foxtrot", "golf", "hotel", "india", "juliet",
                                 "kilo", "lima", "mike", "november", "oscar",
                                 "papa", "quebec", "romeo", "sierra", "tango"};
  std::string ents, train, valid, test;
  for (int i = 0; i < 20; ++i) {
    ents += "n" + std::to_string(i) + "\t" + kNames[i] + "\n";
    const std::string row =
        "n" + std::to_string(i) + "\tnext\tn" + std::to_string((i + 1) % 20) + "\n";
    if (i == 7 || i == 13) {
      test += row;
    } else if (i == 3) {
      valid += row;
    } else {
      train += row;
    }
  }
  WriteText(dir / "data/entities.tsv", ents);
  WriteText(dir / "data/relations.tsv", "next\tnext_to\n");
  WriteText(dir / "data/train.tsv", train);
  WriteText(dir / "data/valid.tsv", valid);
  WriteText(dir / "data/test.tsv", test);
  WriteText(dir / "run.toml",
            "[dataset]\n"
            "entities = \"data/entities.tsv\"\n"
            "relations = \"data/relations.tsv\"\n"
            "train = \"data/train.tsv\"\n"
            "valid = \"data/valid.tsv\"\n"
            "test = \"data/test.tsv\"\n\n"
            "[run]\n"
            "outdir = \"out\"\n"
            "seed = 3\n\n"
            "[provider]\n"
            "dimension = 32\n\n"
            "[trainer]\n"
            "epochs = 3\n"
            "batch_size = 8\n\n"
            "[llm]\n"
            "sample_size = 2\n" +
                extra);
  return dir;
}

std::string Config(const fs::path& dir) { return (dir / "run.toml").string(); }

TEST_CASE("config parsing") {
  const fs::path dir = MakeProject("app_config");
  const RunConfig cfg = RunConfig::FromToml(dir / "run.toml");
  CHECK(cfg.triples.train == dir / "data/train.tsv");
  CHECK(cfg.outdir == dir / "out");
  CHECK(cfg.seed == 3);
  CHECK(cfg.trainer.seed == 3);
  CHECK(cfg.llm.seed == 3);
  CHECK(cfg.dimension == 32);
  CHECK(cfg.trainer.epochs == 3);
  CHECK(cfg.trainer.learning_rate == TrainerConfig{}.learning_rate);
  CHECK(cfg.llm.sample_size == 2);
  CHECK(cfg.model == "masked_entity");

  WriteText(dir / "typo.toml", "[trainer]\nepochz = 3\n");
  CHECK_THROWS_AS(RunConfig::FromToml(dir / "typo.toml"), ConfigError);
  WriteText(dir / "broken.toml", "[trainer\n");
  CHECK_THROWS_AS(RunConfig::FromToml(dir / "broken.toml"), ConfigError);
  RunConfig bad = cfg;
  bad.model = "transe";
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  bad = cfg;
  bad.provider = "file";
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
}

TEST_CASE("ingest") {
  const fs::path dir = MakeProject("app_ingest");
  const CliResult r = Cli({"ingest", "--config", Config(dir)});
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(r.out);
  CHECK(report["entities"] == 20);
  CHECK(report["train"] == 17);
  CHECK(report["test"] == 2);
  const std::string first = ReadText(dir / "out/snapshot");
  CHECK(!first.empty());
  CHECK(Cli({"ingest", "--config", Config(dir)}).code == 0);
  CHECK(ReadText(dir / "out/snapshot") == first);

  fs::remove(dir / "data/test.tsv");
  const CliResult missing = Cli({"ingest", "--config", Config(dir), "--outdir",
                                 (dir / "other").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: ", 0) == 0);
}

TEST_CASE("train, resume and determinism") {
  const fs::path dir = MakeProject("app_train");
  const CliResult fast = Cli({"train", "--config", Config(dir), "--fast-run"});
  REQUIRE(fast.code == 0);
  const auto summary = nlohmann::json::parse(fast.out);
  CHECK(summary["epoch"] == 2);
  CHECK(summary.contains("valid"));
  CHECK(fs::exists(dir / "out/checkpoint/header.json"));
  const auto metrics = nlohmann::json::parse(ReadText(dir / "out/metrics.json"));
  CHECK(metrics.contains("valid"));
  std::istringstream logs(ReadText(dir / "out/logs.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(logs, line)) ++n;
  CHECK(n == 2);

  const CliResult resumed = Cli({"train", "--config", Config(dir), "--resume", "--epochs", "4"});
  REQUIRE(resumed.code == 0);
  const auto after = nlohmann::json::parse(resumed.out);
  CHECK(after["epoch"] == 4);
  CHECK(after["step"].get<int>() > summary["step"].get<int>());

  // Flags beat the file: three epochs in the file, one on the command line.
  const CliResult one = Cli({"train", "--config", Config(dir), "--outdir",
                             (dir / "one").string(), "--epochs", "1"});
  CHECK(nlohmann::json::parse(one.out)["epoch"] == 1);

  const fs::path a = dir / "det_a";
  const fs::path b = dir / "det_b";
  REQUIRE(Cli({"train", "--config", Config(dir), "--outdir", a.string()}).code == 0);
  REQUIRE(Cli({"train", "--config", Config(dir), "--outdir", b.string()}).code == 0);
  for (const auto& f : fs::directory_iterator(a / "checkpoint")) {
    CHECK(ReadText(f.path()) == ReadText(b / "checkpoint" / f.path().filename()));
  }
  CHECK(ReadText(a / "metrics.json") == ReadText(b / "metrics.json"));
  const fs::path c = dir / "det_c";
  REQUIRE(Cli({"train", "--config", Config(dir), "--outdir", c.string(), "--seed", "4"}).code == 0);
  CHECK(ReadText(a / "checkpoint/entities.emb") != ReadText(c / "checkpoint/entities.emb"));
}

TEST_CASE("eval and predict") {
  const fs::path dir = MakeProject("app_eval");
  REQUIRE(Cli({"train", "--config", Config(dir), "--fast-run"}).code == 0);
  const CliResult both = Cli({"eval", "--config", Config(dir), "--split", "test"});
  REQUIRE(both.code == 0);
  CHECK(nlohmann::json::parse(both.out)["count"] == 4);
  const CliResult tail = Cli({"eval", "--config", Config(dir), "--split", "test",
                              "--directions", "tail"});
  CHECK(nlohmann::json::parse(tail.out)["count"] == 2);
  const auto metrics = nlohmann::json::parse(ReadText(dir / "out/metrics.json"));
  CHECK(metrics.contains("valid"));
  CHECK(metrics["test"]["count"] == 2);
  CHECK(ReadText(dir / "out/ranks_test.tsv").rfind("n7\tnext\ttail\tn8\t", 0) == 0);

  const CliResult pred = Cli({"predict", "--config", Config(dir), "--head", "n0",
                              "--relation", "next", "--top-n", "3"});
  REQUIRE(pred.code == 0);
  const auto ranked = nlohmann::json::parse(pred.out);
  CHECK(ranked.size() == 3);
  CHECK(ranked[0].contains("name"));
  const CliResult hist = Cli({"predict", "--config", Config(dir), "--history", "n0,n1"});
  CHECK(hist.code == 0);
  const CliResult qa = Cli({"predict", "--config", Config(dir), "--question", "alpha [E0]"});
  CHECK(qa.code == 0);
  CHECK(Cli({"predict", "--config", Config(dir), "--head", "nope", "--relation", "next"}).code == 1);
}

TEST_CASE("llm command") {
  const fs::path dir = MakeProject("app_llm");
  const CliResult ok = Cli({"llm", "--config", Config(dir), "--mock"});
  REQUIRE(ok.code == 0);
  CHECK(nlohmann::json::parse(ok.out)["hits1"] == 1.0);
  std::istringstream lines(ReadText(dir / "out/transcript.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    CHECK(nlohmann::json::parse(line)["hit"] == true);
    ++n;
  }
  CHECK(n == 2);
  const CliResult adv = Cli({"llm", "--config", Config(dir), "--mock", "adversarial"});
  CHECK(nlohmann::json::parse(adv.out)["hits1"] == 0.0);

  ::unsetenv("KGLAB_API_KEY");
  ::unsetenv("KGLAB_API_BASE");
  const CliResult real = Cli({"llm", "--config", Config(dir)});
  CHECK(real.code == 1);
  CHECK(real.err.find("error: ") == 0);
  CHECK(Cli({"llm", "--config", Config(dir), "--mock", "--sample", "9"}).code == 1);
}

TEST_CASE("cost command") {
  const CliResult r = Cli({"cost", "--method", "KGBERT", "-L", "2", "-E", "3", "-R", "5"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["value"] == 180.0);
  CHECK(j["expression"] == "O(|L|^2|E|^2|R|)");
  CHECK(Cli({"cost", "--method", "TransE", "-L", "2", "-E", "3", "-R", "5"}).code == 1);
  CHECK(Cli({"bogus"}).code != 0);
}

}  // namespace
}  // namespace kglab
