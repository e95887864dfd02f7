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

#ifndef KGLAB_TASKS_H_
#define KGLAB_TASKS_H_

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kglab/common.h"
#include "kglab/encoders.h"
#include "kglab/kg.h"
#include "kglab/scoring.h"
#include "kglab/serialize.h"
#include "kglab/training.h"

namespace kglab {

// Read-only view of a trained masked-entity model.
struct MaskedModelView {
  const ModelParameters* params = nullptr;
  const EncoderProvider* encoder = nullptr;
  const KnowledgeGraph* kg = nullptr;
  SerializeConfig serialize;
  // Called with every sequence handed to the encoder.
  std::function<void(const TokenSequence&)> observer;
};

// Masked-entity link prediction. With a filter, every other known answer is
// removed; `gold`, when given, is always kept.
std::vector<ScoredEntity> KgcPredict(const MaskedModelView& model,
                                     EntityId known, RelationId relation,
                                     Direction direction, std::size_t top_n,
                                     const FilterIndex* filter = nullptr,
                                     std::optional<EntityId> gold = std::nullopt);

// [CLS] <question tokens> [SEP] [MASK] [SEP]. The question may contain
// special-token markup. Throws DataError on an empty question.
TokenSequence QaSequence(std::string_view question, const SerializeConfig& cfg);
std::vector<ScoredEntity> QaAnswer(const MaskedModelView& model,
                                   std::string_view question,
                                   std::size_t top_n);

struct InteractionHistory {
  std::string user;
  std::vector<EntityId> items;  // oldest first
};

// [CLS] [E i1] ... [E im] [MASK] [SEP] over the most recent max_len - 3
// items. Throws DataError on an empty history.
TokenSequence RecommendationSequence(std::span<const EntityId> items,
                                     const SerializeConfig& cfg);
// Items already in the history are never returned.
std::vector<ScoredEntity> RecommendNext(const MaskedModelView& model,
                                        const InteractionHistory& history,
                                        std::size_t top_n);

// Every prefix of every history predicting the item that follows it.
std::vector<MaskedEntityExample> RecommendationExamples(
    const MaskedModelView& model, std::span<const InteractionHistory> histories);

// Plain SGD over masked-entity examples in a seeded shuffled order. Returns
// the mean loss of the last epoch.
double FitMaskedExamples(ModelParameters& params,
                         std::span<const MaskedEntityExample> examples,
                         const TrainerConfig& cfg);

// ---- Probing ----------------------------------------------------------------

struct EntityMention {
  EntityId entity = 0;
  std::size_t begin = 0;  // token range [begin, end)
  std::size_t end = 0;
};

struct ClozeQuery {
  std::vector<Token> tokens;
  std::optional<EntityMention> mention;

  // Throws DataError unless exactly one [MASK] is present and the mention
  // span lies inside the tokens.
  void Validate() const;
};

ClozeQuery ParseCloze(std::string_view text, const SerializeConfig& cfg);

// Token vocabulary scored by a table trained like entity_table, plus the
// entity-embedding fusion strength.
struct ProbeModel {
  std::vector<std::string> vocabulary;
  Matrix token_table;  // |vocabulary| x d
  double lambda = 1.0;

  std::optional<std::size_t> IndexOf(std::string_view token) const;
};

struct ScoredToken {
  std::size_t token = 0;
  double score = 0.0;
};

struct ProbeResult {
  std::vector<ScoredToken> base;
  // Present only when the query carries a mention.
  std::optional<std::vector<ScoredToken>> augmented;
};

// Base context = encode(query). With a mention the augmented context is
// L2-normalize(base + lambda * entity_table[mention]). Rankings are
// log-softmax over the vocabulary, descending, ties by token index.
ProbeResult ProbeFact(const MaskedModelView& model, const ProbeModel& probe,
                      const ClozeQuery& query, std::size_t top_n);

struct ProbeExample {
  ClozeQuery query;
  std::string gold;
};

struct ProbeReport {
  double base_hits1 = 0.0;
  double base_mrr = 0.0;
  double augmented_hits1 = 0.0;
  double augmented_mrr = 0.0;
  std::size_t count = 0;
};

// Queries without a mention count their base rank for both rankings.
ProbeReport EvaluateProbe(const MaskedModelView& model, const ProbeModel& probe,
                          std::span<const ProbeExample> examples);

// Fits probe.token_table on the base contexts of `examples` with the
// masked-entity loss.
double FitTokenTable(const MaskedModelView& model, ProbeModel& probe,
                     std::span<const ProbeExample> examples,
                     const TrainerConfig& cfg);

// ---- Input files ------------------------------------------------------------

struct QaExample {
  std::string question;
  EntityId gold = 0;
};

// "question\tgold_entity_raw_id"
std::vector<QaExample> LoadQaFile(const std::string& path,
                                  const KnowledgeGraph& kg);
// "user_id\titem1,item2,...,itemN", items as entity raw ids
std::vector<InteractionHistory> LoadInteractions(const std::string& path,
                                                 const KnowledgeGraph& kg);
// "cloze_with_[MASK]\tgold_token[\tmention_entity_raw_id:start:end]"
std::vector<ProbeExample> LoadProbeFile(const std::string& path,
                                        const KnowledgeGraph& kg,
                                        const SerializeConfig& cfg);

}  // namespace kglab

#endif  // KGLAB_TASKS_H_
