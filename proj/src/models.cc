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

#include "kglab/models.h"

#include <cmath>
#include <numeric>

namespace kglab {
namespace {

std::vector<EntityId> AllEntities(const KnowledgeGraph& kg) {
  std::vector<EntityId> ids(kg.num_entities());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

Triple MakeTriple(EntityId known, RelationId relation, EntityId other,
                  Direction direction) {
  return direction == Direction::kPredictTail ? Triple{known, relation, other}
                                              : Triple{other, relation, known};
}

std::vector<std::string> Rendered(const TokenSequence& seq) {
  std::vector<std::string> out;
  out.reserve(seq.items.size());
  for (const Token& t : seq.items) out.push_back(t.Render());
  return out;
}

}  // namespace

std::string_view ModelKindName(ModelKind kind) {
  switch (kind) {
    case ModelKind::kMaskedEntity: return "masked_entity";
    case ModelKind::kTwoTower: return "two_tower";
    case ModelKind::kJoint: return "joint";
    case ModelKind::kGeneration: return "generation";
  }
  return "masked_entity";
}

ModelKind ParseModelKind(std::string_view name) {
  if (name == "masked_entity") return ModelKind::kMaskedEntity;
  if (name == "two_tower") return ModelKind::kTwoTower;
  if (name == "joint") return ModelKind::kJoint;
  if (name == "generation") return ModelKind::kGeneration;
  throw ConfigError("unknown model kind: " + std::string(name));
}

std::vector<QueryExample> QueriesFor(std::span<const Triple> triples,
                                     bool include_head) {
  std::vector<QueryExample> out;
  out.reserve(triples.size() * (include_head ? 2 : 1));
  for (const Triple& t : triples) {
    out.push_back({t.head, t.relation, t.tail, Direction::kPredictTail});
  }
  if (include_head) {
    for (const Triple& t : triples) {
      out.push_back({t.tail, t.relation, t.head, Direction::kPredictHead});
    }
  }
  return out;
}

KgeModel::KgeModel(ModelContext ctx) : ctx_(std::move(ctx)) {
  if (!ctx_.kg || !ctx_.filter) {
    throw ConfigError("model needs a knowledge graph and a filter index");
  }
  ctx_.serialize.Validate();
}

const EncoderProvider& KgeModel::encoder() const {
  if (!ctx_.encoder) throw ConfigError("model needs an encoder provider");
  return *ctx_.encoder;
}

ModelParameters KgeModel::InitialParameters(const TrainerConfig& cfg) const {
  const std::size_t d = ctx_.encoder ? ctx_.encoder->dimension() : 2;
  ModelParameters p = ModelParameters::Initialize(
      kg().num_entities(), kg().num_relations(), d,
      0.1 / std::sqrt(static_cast<double>(d)), false, cfg.seed);
  p.temperature = cfg.temperature;
  return p;
}

// ---------------------------------------------------------------------------

MaskedEntityModel::MaskedEntityModel(ModelContext ctx, bool with_projection)
    : KgeModel(std::move(ctx)),
      with_projection_(with_projection),
      all_entities_(AllEntities(kg())) {
  encoder();
}

ModelParameters MaskedEntityModel::InitialParameters(
    const TrainerConfig& cfg) const {
  ModelParameters p = KgeModel::InitialParameters(cfg);
  if (with_projection_) {
    const auto d = static_cast<Eigen::Index>(p.dimension());
    p.context_projection = Matrix::Identity(d, d);
  }
  return p;
}

Vector MaskedEntityModel::QueryContext(EntityId known, RelationId relation,
                                       Direction direction) const {
  const auto key = std::make_tuple(known, relation, direction);
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  Vector v = encoder().Encode(
      EncodeMaskedQuery(kg(), known, relation, direction, ctx_.serialize));
  std::lock_guard<std::mutex> lock(mu_);
  return cache_.emplace(key, std::move(v)).first->second;
}

StepResult MaskedEntityModel::TrainingStep(const ModelParameters& params,
                                           std::span<const QueryExample> batch,
                                           const TrainerConfig& cfg) {
  std::vector<MaskedEntityExample> examples;
  examples.reserve(batch.size());
  for (const auto& q : batch) {
    examples.push_back(
        {QueryContext(q.known, q.relation, q.direction), q.gold, all_entities_});
  }
  return MaskedEntityStep(params, examples, cfg.label_smoothing);
}

std::vector<double> MaskedEntityModel::ScoreAll(const ModelParameters& params,
                                                EntityId known,
                                                RelationId relation,
                                                Direction direction) const {
  const Vector log_p = ScoreMaskedEntity(
      params, QueryContext(known, relation, direction), all_entities_);
  return {log_p.data(), log_p.data() + log_p.size()};
}

// ---------------------------------------------------------------------------

TwoTowerModel::TwoTowerModel(ModelContext ctx)
    : KgeModel(std::move(ctx)), all_entities_(AllEntities(kg())) {
  const auto d = static_cast<Eigen::Index>(encoder().dimension());
  tails_.resize(static_cast<Eigen::Index>(kg().num_entities()), d);
  for (EntityId e : all_entities_) {
    tails_.row(e) =
        encoder().Encode(EncodeTail(kg(), e, ctx_.serialize)).transpose();
  }
}

ModelParameters TwoTowerModel::InitialParameters(
    const TrainerConfig& cfg) const {
  ModelParameters p = KgeModel::InitialParameters(cfg);
  const auto d = static_cast<Eigen::Index>(p.dimension());
  p.query_projection = Matrix::Identity(d, d);
  p.tail_projection = Matrix::Identity(d, d);
  return p;
}

Vector TwoTowerModel::QueryEmbedding(EntityId known, RelationId relation,
                                     Direction direction) const {
  const auto key = std::make_tuple(known, relation, direction);
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  Vector v = encoder().Encode(
      EncodeHrPair(kg(), known, relation, direction, ctx_.serialize));
  std::lock_guard<std::mutex> lock(mu_);
  return cache_.emplace(key, std::move(v)).first->second;
}

std::vector<double> TwoTowerModel::ScoreAll(const ModelParameters& params,
                                            EntityId known, RelationId relation,
                                            Direction direction) const {
  const Vector q = params.query_projection.size() > 0
                       ? Vector(params.query_projection *
                                QueryEmbedding(known, relation, direction))
                       : QueryEmbedding(known, relation, direction);
  const Matrix keys = params.tail_projection.size() > 0
                          ? Matrix(tails_ * params.tail_projection.transpose())
                          : tails_;
  std::vector<double> out(kg().num_entities());
  for (EntityId e : all_entities_) {
    out[e] = ScoreTwoTower(q, keys.row(e).transpose());
  }
  return out;
}

void TwoTowerModel::BeginEpoch(const ModelParameters& params,
                               std::span<const QueryExample> train,
                               const TrainerConfig& cfg) {
  negatives_.clear();
  if (cfg.negatives_k == 0) return;
  for (const auto& q : train) {
    const std::vector<double> scores =
        ScoreAll(params, q.known, q.relation, q.direction);
    negatives_[{q.known, q.relation, q.direction, q.gold}] = TopKHardNegatives(
        all_entities_, [&](EntityId e) { return scores[e]; }, q.gold,
        ctx_.filter->answers(q.known, q.relation, q.direction),
        cfg.negatives_k);
  }
}

StepResult TwoTowerModel::TrainingStep(const ModelParameters& params,
                                       std::span<const QueryExample> batch,
                                       const TrainerConfig& cfg) {
  std::vector<ContrastiveExample> examples;
  examples.reserve(batch.size());
  for (const auto& q : batch) {
    ContrastiveExample ex{QueryEmbedding(q.known, q.relation, q.direction),
                          q.gold,
                          {}};
    if (auto it = negatives_.find({q.known, q.relation, q.direction, q.gold});
        it != negatives_.end()) {
      ex.hard_negatives = it->second;
    }
    examples.push_back(std::move(ex));
  }
  return InfoNceStep(params, examples, tails_, cfg.label_smoothing);
}

// ---------------------------------------------------------------------------

JointModel::JointModel(ModelContext ctx)
    : KgeModel(std::move(ctx)), all_entities_(AllEntities(kg())) {
  encoder();
}

Vector JointModel::Features(const Triple& t) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = cache_.find(t); it != cache_.end()) return it->second;
  }
  Vector v = encoder().Encode(EncodeJointTriple(kg(), t, ctx_.serialize));
  std::lock_guard<std::mutex> lock(mu_);
  return cache_.emplace(t, std::move(v)).first->second;
}

std::vector<double> JointModel::ScoreAll(const ModelParameters& params,
                                         EntityId known, RelationId relation,
                                         Direction direction) const {
  std::vector<double> out(kg().num_entities());
  for (EntityId e : all_entities_) {
    out[e] = ScoreJointFeatures(params,
                                Features(MakeTriple(known, relation, e, direction)));
  }
  return out;
}

void JointModel::BeginEpoch(const ModelParameters& params,
                            std::span<const QueryExample> train,
                            const TrainerConfig& cfg) {
  negatives_.clear();
  const std::size_t k = std::max<std::size_t>(1, cfg.negatives_k);
  for (const auto& q : train) {
    const std::vector<double> scores =
        ScoreAll(params, q.known, q.relation, q.direction);
    negatives_[{q.known, q.relation, q.direction, q.gold}] = TopKHardNegatives(
        all_entities_, [&](EntityId e) { return scores[e]; }, q.gold,
        ctx_.filter->answers(q.known, q.relation, q.direction), k);
  }
}

StepResult JointModel::TrainingStep(const ModelParameters& params,
                                    std::span<const QueryExample> batch,
                                    const TrainerConfig&) {
  std::vector<JointExample> examples;
  for (const auto& q : batch) {
    examples.push_back(
        {Features(MakeTriple(q.known, q.relation, q.gold, q.direction)), 1.0});
    if (auto it = negatives_.find({q.known, q.relation, q.direction, q.gold});
        it != negatives_.end()) {
      for (EntityId n : it->second) {
        examples.push_back(
            {Features(MakeTriple(q.known, q.relation, n, q.direction)), 0.0});
      }
    }
  }
  return JointStep(params, examples);
}

// ---------------------------------------------------------------------------

GenerationModel::GenerationModel(ModelContext ctx,
                                 std::shared_ptr<const LogProbProvider> lp)
    : KgeModel(std::move(ctx)),
      trie_(EntityTrie::FromGraph(kg(), ctx_.serialize)) {
  if (lp) {
    lp_ = std::move(lp);
    return;
  }
  std::vector<std::string> vocab;
  for (const auto& [id, tokens] : trie_.paths()) {
    vocab.insert(vocab.end(), tokens.begin(), tokens.end());
  }
  auto counts = std::make_shared<CountLogProbProvider>(
      std::move(vocab), CountLogProbProvider::Options{});
  for (const auto& q : QueriesFor(kg().train(), true)) {
    counts->Observe(GenerationContext(q.known, q.relation, q.direction),
                    trie_.paths().at(q.gold));
  }
  lp_ = std::move(counts);
}

std::vector<std::string> GenerationModel::GenerationContext(
    EntityId known, RelationId relation, Direction direction) const {
  return Rendered(
      EncodeHrPair(kg(), known, relation, direction, ctx_.serialize));
}

StepResult GenerationModel::TrainingStep(const ModelParameters&,
                                         std::span<const QueryExample> batch,
                                         const TrainerConfig&) {
  StepResult out;
  if (batch.empty()) return out;
  for (const auto& q : batch) {
    out.loss -= ScoreGeneration(
        *lp_, GenerationContext(q.known, q.relation, q.direction),
        trie_.paths().at(q.gold));
  }
  out.loss /= static_cast<double>(batch.size());
  return out;
}

std::vector<double> GenerationModel::ScoreAll(const ModelParameters&,
                                              EntityId known,
                                              RelationId relation,
                                              Direction direction) const {
  const auto context = GenerationContext(known, relation, direction);
  std::vector<double> out(kg().num_entities());
  for (const auto& [id, tokens] : trie_.paths()) {
    out[id] = ScoreGeneration(*lp_, context, tokens);
  }
  return out;
}

std::vector<ScoredEntity> GenerationModel::Decode(EntityId known,
                                                  RelationId relation,
                                                  Direction direction,
                                                  std::size_t beam) const {
  return DecodeConstrained(*lp_, GenerationContext(known, relation, direction),
                           trie_, beam);
}

std::unique_ptr<KgeModel> MakeModel(ModelKind kind, ModelContext ctx) {
  switch (kind) {
    case ModelKind::kMaskedEntity:
      return std::make_unique<MaskedEntityModel>(std::move(ctx));
    case ModelKind::kTwoTower:
      return std::make_unique<TwoTowerModel>(std::move(ctx));
    case ModelKind::kJoint:
      return std::make_unique<JointModel>(std::move(ctx));
    case ModelKind::kGeneration:
      return std::make_unique<GenerationModel>(std::move(ctx));
  }
  throw ConfigError("unknown model kind");
}

}  // namespace kglab
