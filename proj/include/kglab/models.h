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

#ifndef KGLAB_MODELS_H_
#define KGLAB_MODELS_H_

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "kglab/common.h"
#include "kglab/encoders.h"
#include "kglab/kg.h"
#include "kglab/scoring.h"
#include "kglab/serialize.h"
#include "kglab/training.h"

namespace kglab {

enum class ModelKind { kMaskedEntity, kTwoTower, kJoint, kGeneration };

std::string_view ModelKindName(ModelKind kind);
ModelKind ParseModelKind(std::string_view name);

// One link-prediction training query: given `known`, predict `gold`.
struct QueryExample {
  EntityId known = 0;
  RelationId relation = 0;
  EntityId gold = 0;
  Direction direction = Direction::kPredictTail;
};

// Tail queries for every triple, followed by head queries when requested.
std::vector<QueryExample> QueriesFor(std::span<const Triple> triples,
                                     bool include_head);

// Everything a model reads but never writes.
struct ModelContext {
  const KnowledgeGraph* kg = nullptr;
  const FilterIndex* filter = nullptr;
  const EncoderProvider* encoder = nullptr;
  SerializeConfig serialize;
};

// A scoring formulation plus its training step. Models own only caches of
// frozen-encoder outputs; trainable state lives in ModelParameters.
class KgeModel {
 public:
  explicit KgeModel(ModelContext ctx);
  virtual ~KgeModel() = default;

  virtual ModelKind kind() const = 0;
  virtual ModelParameters InitialParameters(const TrainerConfig& cfg) const;

  // Hook run before every epoch (hard-negative refresh).
  virtual void BeginEpoch(const ModelParameters& /*params*/,
                          std::span<const QueryExample> /*train*/,
                          const TrainerConfig& /*cfg*/) {}

  // Loss and gradients of one batch; the trainer applies the update.
  virtual StepResult TrainingStep(const ModelParameters& params,
                                  std::span<const QueryExample> batch,
                                  const TrainerConfig& cfg) = 0;

  // Score of every entity as the answer, indexed by entity id. Safe to call
  // concurrently.
  virtual std::vector<double> ScoreAll(const ModelParameters& params,
                                       EntityId known, RelationId relation,
                                       Direction direction) const = 0;

  const ModelContext& context() const { return ctx_; }

 protected:
  const KnowledgeGraph& kg() const { return *ctx_.kg; }
  const EncoderProvider& encoder() const;

  ModelContext ctx_;
};

// Masked-entity softmax over the entity embedding table; the encoder is
// frozen and only entity rows (plus an optional projection) learn.
class MaskedEntityModel : public KgeModel {
 public:
  explicit MaskedEntityModel(ModelContext ctx, bool with_projection = false);

  ModelKind kind() const override { return ModelKind::kMaskedEntity; }
  ModelParameters InitialParameters(const TrainerConfig& cfg) const override;
  StepResult TrainingStep(const ModelParameters& params,
                          std::span<const QueryExample> batch,
                          const TrainerConfig& cfg) override;
  std::vector<double> ScoreAll(const ModelParameters& params, EntityId known,
                               RelationId relation,
                               Direction direction) const override;

  // Encoder output for the masked query of (known, relation, direction).
  Vector QueryContext(EntityId known, RelationId relation,
                      Direction direction) const;

 private:
  bool with_projection_;
  std::vector<EntityId> all_entities_;
  mutable std::mutex mu_;
  mutable std::map<std::tuple<EntityId, RelationId, Direction>, Vector> cache_;
};

// Two-tower cosine model trained with in-batch InfoNCE plus top-k hard
// negatives refreshed once per epoch.
class TwoTowerModel : public KgeModel {
 public:
  explicit TwoTowerModel(ModelContext ctx);

  ModelKind kind() const override { return ModelKind::kTwoTower; }
  ModelParameters InitialParameters(const TrainerConfig& cfg) const override;
  void BeginEpoch(const ModelParameters& params,
                  std::span<const QueryExample> train,
                  const TrainerConfig& cfg) override;
  StepResult TrainingStep(const ModelParameters& params,
                          std::span<const QueryExample> batch,
                          const TrainerConfig& cfg) override;
  std::vector<double> ScoreAll(const ModelParameters& params, EntityId known,
                               RelationId relation,
                               Direction direction) const override;

  Vector QueryEmbedding(EntityId known, RelationId relation,
                        Direction direction) const;
  const Matrix& tail_embeddings() const { return tails_; }

 private:
  Matrix tails_;
  std::vector<EntityId> all_entities_;
  std::map<std::tuple<EntityId, RelationId, Direction, EntityId>,
           std::vector<EntityId>>
      negatives_;
  mutable std::mutex mu_;
  mutable std::map<std::tuple<EntityId, RelationId, Direction>, Vector> cache_;
};

// Joint triple classifier trained with binary cross-entropy against top-k
// hard negatives.
class JointModel : public KgeModel {
 public:
  explicit JointModel(ModelContext ctx);

  ModelKind kind() const override { return ModelKind::kJoint; }
  void BeginEpoch(const ModelParameters& params,
                  std::span<const QueryExample> train,
                  const TrainerConfig& cfg) override;
  StepResult TrainingStep(const ModelParameters& params,
                          std::span<const QueryExample> batch,
                          const TrainerConfig& cfg) override;
  std::vector<double> ScoreAll(const ModelParameters& params, EntityId known,
                               RelationId relation,
                               Direction direction) const override;

  Vector Features(const Triple& t) const;

 private:
  std::vector<EntityId> all_entities_;
  std::map<std::tuple<EntityId, RelationId, Direction, EntityId>,
           std::vector<EntityId>>
      negatives_;
  mutable std::mutex mu_;
  mutable std::map<Triple, Vector> cache_;
};

// Sequence-generation scoring. Without an external provider the model fits a
// count-based provider on the train split (both directions) at construction.
class GenerationModel : public KgeModel {
 public:
  explicit GenerationModel(ModelContext ctx,
                           std::shared_ptr<const LogProbProvider> lp = nullptr);

  ModelKind kind() const override { return ModelKind::kGeneration; }
  StepResult TrainingStep(const ModelParameters& params,
                          std::span<const QueryExample> batch,
                          const TrainerConfig& cfg) override;
  std::vector<double> ScoreAll(const ModelParameters& params, EntityId known,
                               RelationId relation,
                               Direction direction) const override;

  // Rendered (h, r) sequence the generator conditions on.
  std::vector<std::string> GenerationContext(EntityId known,
                                             RelationId relation,
                                             Direction direction) const;
  std::vector<ScoredEntity> Decode(EntityId known, RelationId relation,
                                   Direction direction, std::size_t beam) const;

  const LogProbProvider& provider() const { return *lp_; }
  const EntityTrie& trie() const { return trie_; }

 private:
  std::shared_ptr<const LogProbProvider> lp_;
  EntityTrie trie_;
};

std::unique_ptr<KgeModel> MakeModel(ModelKind kind, ModelContext ctx);

}  // namespace kglab

#endif  // KGLAB_MODELS_H_
