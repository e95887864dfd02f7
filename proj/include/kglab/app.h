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

#ifndef KGLAB_APP_H_
#define KGLAB_APP_H_

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kglab/encoders.h"
#include "kglab/eval.h"
#include "kglab/kg.h"
#include "kglab/llm.h"
#include "kglab/serialize.h"
#include "kglab/training.h"

namespace kglab {

// Everything one command needs. Precedence, lowest first: built-in defaults,
// the TOML file given with --config, command-line flags.
struct RunConfig {
  // [dataset]; relative paths resolve against the config file's directory.
  std::filesystem::path entities;
  std::filesystem::path relations;
  SplitPaths triples;

  // [run]
  std::string model = "masked_entity";  // or two_tower, joint, generation, llm
  std::filesystem::path outdir = "out";
  std::uint64_t seed = 0;
  std::size_t eval_threads = 1;
  bool train_head_queries = true;

  // [provider]
  std::string provider = "hash";  // hash, file or remote
  std::size_t dimension = 64;
  std::filesystem::path store;
  std::string provider_model = "text-embedding-3-small";

  TrainerConfig trainer;      // [trainer]
  SerializeConfig serialize;  // [serialize]
  LlmKgcConfig llm;           // [llm]
  std::string llm_model = "gpt-3.5-turbo";
  int llm_max_retries = 3;

  static RunConfig FromToml(const std::filesystem::path& path);

  // Pushes the run seed into every seeded component.
  void ApplySeed(std::uint64_t s);

  // Throws ConfigError on an invalid model/provider combination or value.
  void Validate() const;
};

std::unique_ptr<EncoderProvider> MakeEncoder(const RunConfig& cfg);

// Snapshot under outdir when present, the dataset files otherwise.
KnowledgeGraph LoadRunGraph(const RunConfig& cfg);

// Each command writes its primary outputs under cfg.outdir and returns the
// text it prints on stdout.
std::string CmdIngest(const RunConfig& cfg);
std::string CmdTrain(const RunConfig& cfg, bool resume);
std::string CmdEval(const RunConfig& cfg, Split split, Directions directions);

struct PredictRequest {
  std::string head;      // raw id of the known entity (kgc)
  std::string relation;  // raw id (kgc)
  Direction direction = Direction::kPredictTail;
  std::string question;              // qa, masked_entity only
  std::vector<std::string> history;  // recommendation, masked_entity only
  std::size_t top_n = 10;
};
std::string CmdPredict(const RunConfig& cfg, const PredictRequest& req);

// `mock` is "", "perfect" or "adversarial".
std::string CmdLlm(const RunConfig& cfg, const std::string& mock);
std::string CmdCost(const CostModelInput& input);

// Full command-line entry point; returns the process exit code.
int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err);

}  // namespace kglab

#endif  // KGLAB_APP_H_
