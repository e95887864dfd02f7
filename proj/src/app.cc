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

#include "kglab/app.h"

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kglab/models.h"
#include "kglab/tasks.h"
#include "kglab/trainer.h"
#include "toml.hpp"

namespace kglab {
namespace fs = std::filesystem;
namespace {

using Json = nlohmann::ordered_json;

void CheckKeys(const toml::table& section, const std::string& name,
               const std::set<std::string>& allowed) {
  for (const auto& [key, _] : section) {
    if (!allowed.count(std::string(key.str()))) {
      throw ConfigError("unknown key '" + std::string(key.str()) + "' in [" +
                        name + "]");
    }
  }
}

template <typename T>
void Read(const toml::table& section, const char* key, T& out) {
  const toml::node* node = section.get(key);
  if (node == nullptr) return;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node->value_exact<bool>()) { out = *v; return; }
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node->value_exact<std::string>()) { out = *v; return; }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (auto v = node->value<double>()) { out = *v; return; }
  } else {
    if (auto v = node->value_exact<std::int64_t>()) {
      if (*v < 0) throw ConfigError(std::string("'") + key + "' must be non-negative");
      out = static_cast<T>(*v);
      return;
    }
  }
  throw ConfigError(std::string("'") + key + "' has the wrong type");
}

void ReadPath(const toml::table& section, const char* key, const fs::path& base,
              fs::path& out) {
  std::string s;
  Read(section, key, s);
  if (s.empty()) return;
  fs::path p(s);
  out = p.is_absolute() ? p : base / p;
}

const toml::table* Section(const toml::table& root, const char* name) {
  const toml::node* node = root.get(name);
  if (node == nullptr) return nullptr;
  if (!node->is_table()) throw ConfigError(std::string("[") + name + "] must be a table");
  return node->as_table();
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

// metrics.json holds one report per key; later commands add or replace keys.
void MergeMetrics(const RunConfig& cfg, const std::string& key, const Json& value) {
  const fs::path path = cfg.outdir / "metrics.json";
  Json all = Json::object();
  if (fs::exists(path)) {
    std::ifstream in(path);
    all = Json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (!all.is_object()) all = Json::object();
  }
  all[key] = value;
  WriteFile(path, all.dump(2) + "\n");
}

ModelKind TrainableKind(const RunConfig& cfg) {
  if (cfg.model == "llm") {
    throw ConfigError("model 'llm' has no trainable parameters; use the llm command");
  }
  return ParseModelKind(cfg.model);
}

struct LoadedModel {
  KnowledgeGraph kg;
  FilterIndex filter;
  std::unique_ptr<EncoderProvider> encoder;
  std::unique_ptr<KgeModel> model;
};

std::unique_ptr<LoadedModel> Prepare(const RunConfig& cfg) {
  auto lm = std::make_unique<LoadedModel>();
  lm->kg = LoadRunGraph(cfg);
  lm->filter = BuildFilterSets(lm->kg);
  lm->encoder = MakeEncoder(cfg);
  lm->model = MakeModel(TrainableKind(cfg),
                        ModelContext{&lm->kg, &lm->filter, lm->encoder.get(),
                                     cfg.serialize});
  return lm;
}

Json CheckpointExtra(const RunConfig& cfg) {
  Json j;
  j["provider"] = cfg.provider;
  j["provider_dimension"] = cfg.dimension;
  j["seed"] = cfg.seed;
  return j;
}

Checkpoint LoadRunCheckpoint(const RunConfig& cfg, const LoadedModel& lm) {
  Checkpoint ck = LoadCheckpoint(cfg.outdir / "checkpoint", lm.kg);
  if (ck.kind != lm.model->kind()) {
    throw ConfigError("checkpoint holds a " + std::string(ModelKindName(ck.kind)) +
                      " model but the config asks for " + cfg.model);
  }
  return ck;
}

Json ScoredJson(const KnowledgeGraph& kg, const std::vector<ScoredEntity>& items) {
  Json arr = Json::array();
  for (const auto& s : items) {
    Json j;
    j["entity"] = kg.entity(s.entity).raw_id;
    j["name"] = kg.entity(s.entity).surface_name;
    j["score"] = s.score;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

RunConfig RunConfig::FromToml(const fs::path& path) {
  toml::table root;
  try {
    root = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ": " << e.description() << " at "
        << e.source().begin;
    throw ConfigError(msg.str());
  }
  CheckKeys(root, "root", {"dataset", "run", "provider", "trainer", "serialize", "llm"});
  const fs::path base = fs::absolute(path).parent_path();
  RunConfig cfg;
  if (const auto* s = Section(root, "dataset")) {
    CheckKeys(*s, "dataset", {"entities", "relations", "train", "valid", "test"});
    ReadPath(*s, "entities", base, cfg.entities);
    ReadPath(*s, "relations", base, cfg.relations);
    ReadPath(*s, "train", base, cfg.triples.train);
    ReadPath(*s, "valid", base, cfg.triples.valid);
    ReadPath(*s, "test", base, cfg.triples.test);
  }
  std::optional<std::uint64_t> seed;
  if (const auto* s = Section(root, "run")) {
    CheckKeys(*s, "run", {"model", "outdir", "seed", "eval_threads", "train_head_queries"});
    Read(*s, "model", cfg.model);
    ReadPath(*s, "outdir", base, cfg.outdir);
    std::uint64_t v = 0;
    if (s->get("seed")) {
      Read(*s, "seed", v);
      seed = v;
    }
    Read(*s, "eval_threads", cfg.eval_threads);
    Read(*s, "train_head_queries", cfg.train_head_queries);
  }
  if (const auto* s = Section(root, "provider")) {
    CheckKeys(*s, "provider", {"kind", "dimension", "store", "model"});
    Read(*s, "kind", cfg.provider);
    Read(*s, "dimension", cfg.dimension);
    ReadPath(*s, "store", base, cfg.store);
    Read(*s, "model", cfg.provider_model);
  }
  if (const auto* s = Section(root, "trainer")) {
    CheckKeys(*s, "trainer",
              {"learning_rate", "epochs", "batch_size", "label_smoothing",
               "ema_decay", "patience", "min_delta", "negatives_k",
               "temperature", "fast_run"});
    TrainerConfig& t = cfg.trainer;
    Read(*s, "learning_rate", t.learning_rate);
    Read(*s, "epochs", t.epochs);
    Read(*s, "batch_size", t.batch_size);
    Read(*s, "label_smoothing", t.label_smoothing);
    Read(*s, "ema_decay", t.ema_decay);
    Read(*s, "patience", t.patience);
    Read(*s, "min_delta", t.min_delta);
    Read(*s, "negatives_k", t.negatives_k);
    Read(*s, "temperature", t.temperature);
    Read(*s, "fast_run", t.fast_run);
  }
  if (const auto* s = Section(root, "serialize")) {
    CheckKeys(*s, "serialize",
              {"max_len", "neighbor_k", "lowercase", "description_included"});
    Read(*s, "max_len", cfg.serialize.max_len);
    Read(*s, "neighbor_k", cfg.serialize.neighbor_k);
    Read(*s, "lowercase", cfg.serialize.lowercase);
    Read(*s, "description_included", cfg.serialize.description_included);
  }
  if (const auto* s = Section(root, "llm")) {
    CheckKeys(*s, "llm",
              {"sample_size", "num_candidates", "num_demonstrations",
               "rationale", "task_description", "model", "max_retries"});
    Read(*s, "sample_size", cfg.llm.sample_size);
    Read(*s, "num_candidates", cfg.llm.num_candidates);
    Read(*s, "num_demonstrations", cfg.llm.num_demonstrations);
    Read(*s, "rationale", cfg.llm.with_rationale);
    Read(*s, "task_description", cfg.llm.task_description);
    Read(*s, "model", cfg.llm_model);
    std::size_t retries = static_cast<std::size_t>(cfg.llm_max_retries);
    Read(*s, "max_retries", retries);
    cfg.llm_max_retries = static_cast<int>(retries);
  }
  cfg.ApplySeed(seed.value_or(0));
  return cfg;
}

void RunConfig::ApplySeed(std::uint64_t s) {
  seed = s;
  trainer.seed = s;
  serialize.neighbor_seed = s;
  llm.seed = s;
}

void RunConfig::Validate() const {
  static const std::set<std::string> kModels = {"masked_entity", "two_tower",
                                                "joint", "generation", "llm"};
  static const std::set<std::string> kProviders = {"hash", "file", "remote"};
  if (!kModels.count(model)) throw ConfigError("unknown model '" + model + "'");
  if (!kProviders.count(provider)) {
    throw ConfigError("unknown provider '" + provider + "'");
  }
  if (provider == "file" && store.empty()) {
    throw ConfigError("provider 'file' needs [provider] store");
  }
  if (provider != "file" && dimension == 0) {
    throw ConfigError("provider dimension must be positive");
  }
  if (eval_threads == 0) throw ConfigError("eval_threads must be positive");
  trainer.Validate();
  serialize.Validate();
}

std::unique_ptr<EncoderProvider> MakeEncoder(const RunConfig& cfg) {
  if (cfg.provider == "hash") {
    return std::make_unique<HashEncoder>(cfg.dimension, cfg.seed);
  }
  if (cfg.provider == "file") {
    return std::make_unique<FileStoreEncoder>(EmbeddingStore::Load(cfg.store));
  }
  if (cfg.provider == "remote") {
    RemoteEncoderConfig rc = RemoteEncoderConfig::FromEnvironment();
    rc.model = cfg.provider_model;
    rc.dimension = cfg.dimension;
    return std::make_unique<RemoteEncoder>(rc);
  }
  throw ConfigError("unknown provider '" + cfg.provider + "'");
}

KnowledgeGraph LoadRunGraph(const RunConfig& cfg) {
  const fs::path snapshot = cfg.outdir / "snapshot";
  if (fs::exists(snapshot)) return ReadSnapshot(snapshot);
  if (cfg.triples.train.empty()) {
    throw ConfigError("no snapshot in " + cfg.outdir.string() +
                      " and no [dataset] train path");
  }
  return LoadKnowledgeGraph(cfg.triples, cfg.entities, cfg.relations);
}

std::string CmdIngest(const RunConfig& cfg) {
  if (cfg.triples.train.empty()) throw ConfigError("[dataset] train is required");
  const KnowledgeGraph kg =
      LoadKnowledgeGraph(cfg.triples, cfg.entities, cfg.relations);
  BuildFilterSets(kg);
  fs::create_directories(cfg.outdir);
  WriteSnapshot(kg, cfg.outdir / "snapshot");
  return LoaderReportJson(kg) + "\n";
}

std::string CmdTrain(const RunConfig& cfg, bool resume) {
  cfg.Validate();
  auto lm = Prepare(cfg);
  fs::create_directories(cfg.outdir);
  std::optional<TrainingState> start;
  if (resume) start = LoadRunCheckpoint(cfg, *lm).state;

  std::ofstream logs(cfg.outdir / "logs.jsonl",
                     resume ? std::ios::app | std::ios::binary : std::ios::binary);
  if (!logs) throw DataError("cannot write logs.jsonl");
  FitOptions options;
  options.train_head_queries = cfg.train_head_queries;
  options.eval_threads = cfg.eval_threads;
  options.log_sink = [&](const LogRecord& r) {
    logs << r.ToJson() << '\n';
    logs.flush();
  };
  const TrainingState state = Fit(cfg.trainer, *lm->model, options, std::move(start));
  SaveCheckpoint(cfg.outdir / "checkpoint", state, cfg.trainer, lm->model->kind(),
                 lm->kg, CheckpointExtra(cfg));

  Json summary;
  summary["epoch"] = state.epoch;
  summary["step"] = state.step;
  summary["stopped_early"] = state.stopped_early;
  if (!lm->kg.valid().empty()) {
    const ModelParameters& params = state.EvalParameters(cfg.trainer);
    auto scorer = [&](EntityId k, RelationId r, Direction d) {
      return lm->model->ScoreAll(params, k, r, d);
    };
    const auto res = LinkPredictionEval(scorer, lm->kg, lm->kg.valid(), lm->filter,
                                        Directions::kBoth, cfg.eval_threads);
    const Json report = Json::parse(res.report.ToJson());
    MergeMetrics(cfg, "valid", report);
    summary["valid"] = report;
  }
  return summary.dump() + "\n";
}

std::string CmdEval(const RunConfig& cfg, Split split, Directions directions) {
  cfg.Validate();
  auto lm = Prepare(cfg);
  const Checkpoint ck = LoadRunCheckpoint(cfg, *lm);
  const std::vector<Triple>& triples = lm->kg.split(split);
  if (triples.empty()) {
    throw DataError(std::string(SplitName(split)) + " split is empty");
  }
  auto scorer = [&](EntityId k, RelationId r, Direction d) {
    return lm->model->ScoreAll(ck.eval_params, k, r, d);
  };
  const auto res = LinkPredictionEval(scorer, lm->kg, triples, lm->filter,
                                      directions, cfg.eval_threads);
  fs::create_directories(cfg.outdir);
  MergeMetrics(cfg, std::string(SplitName(split)), Json::parse(res.report.ToJson()));
  WriteFile(cfg.outdir / ("ranks_" + std::string(SplitName(split)) + ".tsv"),
            RanksTsv(lm->kg, res.ranks));
  return res.report.ToJson() + "\n";
}

std::string CmdPredict(const RunConfig& cfg, const PredictRequest& req) {
  cfg.Validate();
  auto lm = Prepare(cfg);
  const Checkpoint ck = LoadRunCheckpoint(cfg, *lm);
  const KnowledgeGraph& kg = lm->kg;
  const bool masked = lm->model->kind() == ModelKind::kMaskedEntity;
  MaskedModelView view{&ck.eval_params, lm->encoder.get(), &kg, cfg.serialize, {}};

  std::vector<ScoredEntity> ranked;
  if (!req.question.empty() || !req.history.empty()) {
    if (!masked) throw ConfigError("qa and recommendation need a masked_entity model");
    if (!req.question.empty()) {
      ranked = QaAnswer(view, req.question, req.top_n);
    } else {
      InteractionHistory h;
      for (const auto& raw : req.history) {
        auto id = kg.find_entity(raw);
        if (!id) throw DataError("unknown entity '" + raw + "'");
        h.items.push_back(*id);
      }
      ranked = RecommendNext(view, h, req.top_n);
    }
  } else {
    const auto known = kg.find_entity(req.head);
    const auto rel = kg.find_relation(req.relation);
    if (!known) throw DataError("unknown entity '" + req.head + "'");
    if (!rel) throw DataError("unknown relation '" + req.relation + "'");
    const std::vector<double> scores =
        lm->model->ScoreAll(ck.eval_params, *known, *rel, req.direction);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      ranked.push_back({static_cast<EntityId>(i), scores[i]});
    }
    SortScored(ranked);
    if (ranked.size() > req.top_n) ranked.resize(req.top_n);
  }
  return ScoredJson(kg, ranked).dump() + "\n";
}

std::string CmdLlm(const RunConfig& cfg, const std::string& mock) {
  const KnowledgeGraph kg = LoadRunGraph(cfg);
  const FilterIndex filter = BuildFilterSets(kg);
  std::unique_ptr<LlmClient> client;
  if (mock == "perfect") {
    std::vector<std::string> golds;
    for (const Triple& t : StratifiedSample(kg, kg.test(), cfg.llm.sample_size,
                                            cfg.llm.seed)) {
      golds.push_back(kg.entity(t.tail).surface_name);
    }
    client = MockLlmClient::Scripted(std::move(golds));
  } else if (mock == "adversarial") {
    client = std::make_unique<MockLlmClient>([](const Prompt&) { return std::string(); });
  } else if (mock.empty()) {
    LlmClientConfig lc = LlmClientConfig::FromEnvironment();
    lc.model = cfg.llm_model;
    lc.max_retries = cfg.llm_max_retries;
    client = std::make_unique<ChatCompletionClient>(lc);
  } else {
    throw ConfigError("unknown mock '" + mock + "' (perfect or adversarial)");
  }
  fs::create_directories(cfg.outdir);
  std::ofstream transcript(cfg.outdir / "transcript.jsonl", std::ios::binary);
  if (!transcript) throw DataError("cannot write transcript.jsonl");
  const LlmKgcResult res =
      EvaluateLlmKgc(kg, filter, *client, cfg.llm, [&](const TranscriptLine& line) {
        transcript << line.ToJson(kg) << '\n';
        transcript.flush();
      });
  Json report;
  report["hits1"] = res.hits1;
  report["count"] = res.transcript.size();
  MergeMetrics(cfg, "llm", report);
  return report.dump() + "\n";
}

std::string CmdCost(const CostModelInput& input) {
  const CostModelResult r = CostModel(input);
  Json j;
  j["method"] = r.method;
  j["expression"] = r.expression;
  j["instantiated"] = r.instantiated;
  j["value"] = r.value;
  return j.dump() + "\n";
}

int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Text-based knowledge graph embedding toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool fast_run = false;
  std::optional<std::string> outdir;
  std::optional<double> learning_rate, label_smoothing, ema_decay, min_delta,
      temperature;
  std::optional<std::size_t> epochs, batch_size, patience, negatives_k;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "TOML run configuration");
    cmd->add_option("--seed", seed, "Seed for every random component");
    cmd->add_option("--outdir", outdir, "Output directory");
  };
  auto add_trainer = [&](CLI::App* cmd) {
    cmd->add_flag("--fast-run", fast_run, "At most 2 epochs of 5 batches");
    cmd->add_option("--learning-rate", learning_rate);
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--label-smoothing", label_smoothing);
    cmd->add_option("--ema-decay", ema_decay);
    cmd->add_option("--patience", patience);
    cmd->add_option("--min-delta", min_delta);
    cmd->add_option("--negatives-k", negatives_k);
    cmd->add_option("--temperature", temperature);
  };

  CLI::App* ingest = app.add_subcommand("ingest", "Load and index a dataset");
  add_common(ingest);

  bool resume = false;
  CLI::App* train = app.add_subcommand("train", "Train a model");
  add_common(train);
  add_trainer(train);
  train->add_flag("--resume", resume, "Continue from outdir/checkpoint");

  std::string split_name = "test";
  std::string directions_name = "both";
  CLI::App* eval = app.add_subcommand("eval", "Filtered link-prediction metrics");
  add_common(eval);
  eval->add_option("--split", split_name, "train, valid or test");
  eval->add_option("--directions", directions_name, "tail, head or both");

  PredictRequest req;
  std::string direction_name = "tail";
  std::string history;
  CLI::App* predict = app.add_subcommand("predict", "Rank answers for one query");
  add_common(predict);
  predict->add_option("--head", req.head, "Raw id of the known entity");
  predict->add_option("--relation", req.relation, "Raw relation id");
  predict->add_option("--direction", direction_name, "tail or head");
  predict->add_option("--question", req.question, "Question text (qa)");
  predict->add_option("--history", history, "Comma-separated item raw ids");
  predict->add_option("--top-n", req.top_n);

  std::string mock;
  std::optional<std::size_t> sample;
  CLI::App* llm = app.add_subcommand("llm", "LLM knowledge-graph completion");
  add_common(llm);
  llm->add_option("--mock", mock, "perfect or adversarial")
      ->expected(0, 1)
      ->default_str("perfect");
  llm->add_option("--sample", sample, "Number of test queries");

  CostModelInput cost_in;
  CLI::App* cost = app.add_subcommand("cost", "Per-query cost of a PLM method");
  cost->add_option("--method", cost_in.method)->required();
  cost->add_option("-L,--length", cost_in.description_length)->required();
  cost->add_option("-E,--entities", cost_in.entities)->required();
  cost->add_option("-R,--relations", cost_in.relations)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (cost->parsed()) {
      out << CmdCost(cost_in);
      return 0;
    }
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::FromToml(config_path);
    if (seed) cfg.ApplySeed(*seed);
    if (outdir) cfg.outdir = *outdir;
    TrainerConfig& t = cfg.trainer;
    if (fast_run) t.fast_run = true;
    if (learning_rate) t.learning_rate = *learning_rate;
    if (epochs) t.epochs = *epochs;
    if (batch_size) t.batch_size = *batch_size;
    if (label_smoothing) t.label_smoothing = *label_smoothing;
    if (ema_decay) t.ema_decay = *ema_decay;
    if (patience) t.patience = *patience;
    if (min_delta) t.min_delta = *min_delta;
    if (negatives_k) t.negatives_k = *negatives_k;
    if (temperature) t.temperature = *temperature;
    if (sample) cfg.llm.sample_size = *sample;

    if (ingest->parsed()) {
      out << CmdIngest(cfg);
    } else if (train->parsed()) {
      out << CmdTrain(cfg, resume);
    } else if (eval->parsed()) {
      out << CmdEval(cfg, ParseSplit(split_name), ParseDirections(directions_name));
    } else if (predict->parsed()) {
      req.direction = ParseDirection(direction_name);
      std::stringstream ss(history);
      for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) req.history.push_back(item);
      }
      if (req.question.empty() && req.history.empty() &&
          (req.head.empty() || req.relation.empty())) {
        throw ConfigError("predict needs --head and --relation, --question or --history");
      }
      out << CmdPredict(cfg, req);
    } else if (llm->parsed()) {
      const bool mocked = llm->count("--mock") > 0;
      out << CmdLlm(cfg, mocked ? (mock.empty() ? "perfect" : mock) : "");
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace kglab
