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

#include "kglab/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "kglab/encoders.h"

namespace kglab {
namespace {

double WallTime() {
  return std::chrono::duration<double>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string RngState(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

nlohmann::ordered_json TrainerJson(const TrainerConfig& cfg) {
  nlohmann::ordered_json j;
  j["learning_rate"] = cfg.learning_rate;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["label_smoothing"] = cfg.label_smoothing;
  j["ema_decay"] = cfg.ema_decay;
  j["patience"] = cfg.patience;
  j["min_delta"] = cfg.min_delta;
  j["negatives_k"] = cfg.negatives_k;
  j["temperature"] = cfg.temperature;
  j["fast_run"] = cfg.fast_run;
  j["seed"] = cfg.seed;
  return j;
}

void SaveParameters(const std::filesystem::path& entities_path,
                    const std::filesystem::path& params_path,
                    const ModelParameters& p, const KnowledgeGraph& kg) {
  const std::size_t d = p.dimension();
  EmbeddingStore entities(d);
  for (const Entity& e : kg.entities()) {
    entities.Insert(e.raw_id, p.entity_table.row(e.id).transpose());
  }
  entities.Save(entities_path);
  EmbeddingStore rest(d);
  for (const Relation& r : kg.relations()) {
    if (p.relation_table.rows() > r.id) {
      rest.Insert("relation:" + r.raw_id, p.relation_table.row(r.id).transpose());
    }
  }
  auto put_matrix = [&](const std::string& name, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      rest.Insert(name + ":" + std::to_string(i), m.row(i).transpose());
    }
  };
  put_matrix("query_projection", p.query_projection);
  put_matrix("tail_projection", p.tail_projection);
  put_matrix("context_projection", p.context_projection);
  if (p.classifier_weights.size() > 0) {
    rest.Insert("classifier_weights", p.classifier_weights);
  }
  rest.Save(params_path);
}

ModelParameters LoadParameters(const std::filesystem::path& entities_path,
                               const std::filesystem::path& params_path,
                               const nlohmann::ordered_json& scalars,
                               const KnowledgeGraph& kg) {
  const EmbeddingStore entities = EmbeddingStore::Load(entities_path);
  const EmbeddingStore rest = EmbeddingStore::Load(params_path);
  const auto d = static_cast<Eigen::Index>(entities.dimension());
  if (rest.dimension() != entities.dimension()) {
    throw DataError("checkpoint tensors disagree on dimension");
  }
  ModelParameters p;
  p.entity_table.resize(static_cast<Eigen::Index>(kg.num_entities()), d);
  for (const Entity& e : kg.entities()) {
    p.entity_table.row(e.id) = entities.Lookup(e.raw_id).transpose();
  }
  p.relation_table.resize(static_cast<Eigen::Index>(kg.num_relations()), d);
  for (const Relation& r : kg.relations()) {
    p.relation_table.row(r.id) =
        rest.Lookup("relation:" + r.raw_id).transpose();
  }
  auto get_matrix = [&](const std::string& name) {
    Matrix m;
    if (!rest.contains(name + ":0")) return m;
    m.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      m.row(i) = rest.Lookup(name + ":" + std::to_string(i)).transpose();
    }
    return m;
  };
  p.query_projection = get_matrix("query_projection");
  p.tail_projection = get_matrix("tail_projection");
  p.context_projection = get_matrix("context_projection");
  if (rest.contains("classifier_weights")) {
    p.classifier_weights = rest.Lookup("classifier_weights");
  } else {
    p.classifier_weights = Vector::Zero(d);
  }
  p.classifier_bias = scalars.at("classifier_bias").get<double>();
  p.temperature = scalars.at("temperature").get<double>();
  return p;
}

nlohmann::ordered_json Scalars(const ModelParameters& p) {
  nlohmann::ordered_json j;
  j["classifier_bias"] = p.classifier_bias;
  j["temperature"] = p.temperature;
  return j;
}

}  // namespace

std::string LogRecord::ToJson() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  for (const auto& [name, value] : metrics) j[name] = value;
  j["time"] = wall_time;
  return j.dump();
}

const ModelParameters& TrainingState::EvalParameters(
    const TrainerConfig& cfg) const {
  return cfg.ema_decay > 0 ? ema_shadow : params;
}

double EvaluateStep(const KgeModel& model, const ModelParameters& params,
                    std::span<const Triple> triples, std::size_t threads) {
  const auto& ctx = model.context();
  auto scorer = [&](EntityId known, RelationId r, Direction d) {
    return model.ScoreAll(params, known, r, d);
  };
  return LinkPredictionEval(scorer, *ctx.kg, triples, *ctx.filter,
                            Directions::kBoth, threads)
      .report.hits1;
}

TrainingState Fit(const TrainerConfig& cfg, KgeModel& model,
                  const FitOptions& options,
                  std::optional<TrainingState> resume) {
  cfg.Validate();
  const KnowledgeGraph& kg = *model.context().kg;
  const std::vector<QueryExample> train =
      QueriesFor(kg.train(), options.train_head_queries);
  if (train.empty()) throw DataError("train split is empty");

  TrainingState state;
  std::mt19937_64 rng(cfg.seed);
  if (resume) {
    state = std::move(*resume);
    if (!state.rng_state.empty()) {
      std::istringstream is(state.rng_state);
      is >> rng;
    }
  } else {
    state.params = model.InitialParameters(cfg);
    state.ema_shadow = state.params;
  }
  const bool use_ema = cfg.ema_decay > 0;
  const std::size_t max_epochs =
      cfg.fast_run ? std::min<std::size_t>(cfg.epochs, 2) : cfg.epochs;
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = state.epoch; epoch < max_epochs; ++epoch) {
    model.BeginEpoch(state.params, train, cfg);
    // Fresh permutation each epoch so a resumed run depends only on the
    // saved generator state.
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t num_batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    if (cfg.fast_run) num_batches = std::min<std::size_t>(num_batches, 5);
    double loss_sum = 0.0;
    std::vector<QueryExample> batch;
    for (std::size_t b = 0; b < num_batches; ++b) {
      batch.clear();
      const std::size_t end = std::min(order.size(), (b + 1) * cfg.batch_size);
      for (std::size_t i = b * cfg.batch_size; i < end; ++i) {
        batch.push_back(train[order[i]]);
      }
      StepResult step = model.TrainingStep(state.params, batch, cfg);
      if (!std::isfinite(step.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(state.step));
      }
      step.grad.ApplySgd(state.params, cfg.learning_rate);
      if (!state.params.AllFinite()) {
        throw NumericError("non-finite parameters after step " +
                           std::to_string(state.step));
      }
      if (use_ema) EmaUpdate(state.ema_shadow, state.params, cfg.ema_decay);
      loss_sum += step.loss;
      ++state.step;
    }
    if (!use_ema) state.ema_shadow = state.params;

    LogRecord record;
    record.step = state.step;
    record.epoch = epoch;
    record.metrics.emplace_back(
        "train_loss", loss_sum / static_cast<double>(std::max<std::size_t>(1, num_batches)));
    const bool has_valid = !kg.valid().empty();
    if (has_valid) {
      const double hits1 = EvaluateStep(model, state.EvalParameters(cfg),
                                        kg.valid(), options.eval_threads);
      record.metrics.emplace_back("valid_hits1", hits1);
      state.valid_history.push_back(hits1);
      if (hits1 > state.best_valid_metric + cfg.min_delta) {
        state.best_valid_metric = hits1;
        state.epochs_since_improvement = 0;
      } else {
        ++state.epochs_since_improvement;
      }
    }
    state.epoch = epoch + 1;
    state.rng_state = RngState(rng);
    record.wall_time = WallTime();
    if (options.log_sink) options.log_sink(record);
    if (has_valid && EarlyStopCheck(state.valid_history, cfg.patience,
                                    cfg.min_delta) == StopDecision::kStop) {
      state.stopped_early = true;
      break;
    }
  }
  if (state.rng_state.empty()) state.rng_state = RngState(rng);
  return state;
}

void SaveCheckpoint(const std::filesystem::path& dir, const TrainingState& state,
                    const TrainerConfig& cfg, ModelKind kind,
                    const KnowledgeGraph& kg,
                    const nlohmann::ordered_json& extra) {
  std::filesystem::create_directories(dir);
  const bool use_ema = cfg.ema_decay > 0;
  const ModelParameters& eval = state.EvalParameters(cfg);
  nlohmann::ordered_json h;
  h["format"] = "kglab-checkpoint";
  h["version"] = 1;
  h["model"] = ModelKindName(kind);
  h["dimension"] = eval.dimension();
  h["entities"] = kg.num_entities();
  h["relations"] = kg.num_relations();
  h["epoch"] = state.epoch;
  h["step"] = state.step;
  h["best_valid_metric"] = std::isfinite(state.best_valid_metric)
                               ? nlohmann::ordered_json(state.best_valid_metric)
                               : nlohmann::ordered_json(nullptr);
  h["epochs_since_improvement"] = state.epochs_since_improvement;
  h["valid_history"] = state.valid_history;
  h["stopped_early"] = state.stopped_early;
  h["ema_enabled"] = use_ema;
  h["eval_scalars"] = Scalars(eval);
  h["raw_scalars"] = Scalars(state.params);
  h["trainer"] = TrainerJson(cfg);
  for (const auto& [k, v] : extra.items()) h[k] = v;
  h["rng_state"] = state.rng_state;
  std::ofstream out(dir / "header.json", std::ios::binary);
  out << h.dump(2) << '\n';
  if (!out) throw DataError("cannot write checkpoint header in " + dir.string());
  SaveParameters(dir / "entities.emb", dir / "params.emb", eval, kg);
  if (use_ema) {
    SaveParameters(dir / "raw_entities.emb", dir / "raw_params.emb",
                   state.params, kg);
  } else {
    std::filesystem::remove(dir / "raw_entities.emb");
    std::filesystem::remove(dir / "raw_params.emb");
  }
}

Checkpoint LoadCheckpoint(const std::filesystem::path& dir,
                          const KnowledgeGraph& kg) {
  std::ifstream in(dir / "header.json");
  if (!in) throw DataError("no checkpoint header in " + dir.string());
  Checkpoint ck;
  try {
    ck.header = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint header: ") + e.what());
  }
  const auto& h = ck.header;
  if (h.value("format", "") != "kglab-checkpoint") {
    throw DataError("not a kglab checkpoint: " + dir.string());
  }
  if (h.at("entities").get<std::size_t>() != kg.num_entities() ||
      h.at("relations").get<std::size_t>() != kg.num_relations()) {
    throw DataError("checkpoint was trained on a different graph");
  }
  ck.kind = ParseModelKind(h.at("model").get<std::string>());
  ck.eval_params = LoadParameters(dir / "entities.emb", dir / "params.emb",
                                  h.at("eval_scalars"), kg);
  TrainingState& s = ck.state;
  if (h.at("ema_enabled").get<bool>()) {
    s.params = LoadParameters(dir / "raw_entities.emb", dir / "raw_params.emb",
                              h.at("raw_scalars"), kg);
    s.ema_shadow = ck.eval_params;
  } else {
    s.params = ck.eval_params;
    s.ema_shadow = ck.eval_params;
  }
  s.epoch = h.at("epoch").get<std::size_t>();
  s.step = h.at("step").get<std::uint64_t>();
  if (!h.at("best_valid_metric").is_null()) {
    s.best_valid_metric = h.at("best_valid_metric").get<double>();
  }
  s.epochs_since_improvement = h.at("epochs_since_improvement").get<std::size_t>();
  s.valid_history = h.at("valid_history").get<std::vector<double>>();
  s.stopped_early = h.at("stopped_early").get<bool>();
  s.rng_state = h.at("rng_state").get<std::string>();
  return ck;
}

}  // namespace kglab
