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

#ifndef KGLAB_EVAL_H_
#define KGLAB_EVAL_H_

#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kglab/common.h"
#include "kglab/kg.h"

namespace kglab {

struct RankResult {
  EntityId known = 0;
  RelationId relation = 0;
  Direction direction = Direction::kPredictTail;
  EntityId gold = 0;
  std::size_t rank = 1;
};

struct MetricsReport {
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  double mr = 0.0;
  double mrr = 0.0;
  std::size_t count = 0;

  // {"hits1":..,"hits3":..,"hits10":..,"mr":..,"mrr":..,"count":..}
  std::string ToJson() const;
};

// Filtered rank with pessimistic ties:
//   1 + #{score > gold} + #{score == gold, not gold}
// over candidates outside `filter_true`. The gold is never filtered.
std::size_t RankGold(std::span<const double> scores, EntityId gold,
                     const std::set<EntityId>& filter_true);
std::size_t RankGold(const std::map<EntityId, double>& scores, EntityId gold,
                     const std::set<EntityId>& filter_true);

// Throws DataError on an empty list.
MetricsReport ComputeMetrics(std::span<const std::size_t> ranks);

enum class Directions { kTail, kHead, kBoth };
Directions ParseDirections(std::string_view name);

// Scores every entity as the answer of (known, relation, ?) in the given
// direction; index = entity id, higher is better.
using QueryScorer =
    std::function<std::vector<double>(EntityId, RelationId, Direction)>;

struct LinkPredictionResult {
  MetricsReport report;
  std::vector<RankResult> ranks;  // triple order, tail before head
};

// Filtered link prediction over `triples`. With threads > 1 the scorer is
// called concurrently and must be thread-safe; results do not depend on the
// thread count.
LinkPredictionResult LinkPredictionEval(const QueryScorer& scorer,
                                        const KnowledgeGraph& kg,
                                        std::span<const Triple> triples,
                                        const FilterIndex& filter,
                                        Directions directions,
                                        std::size_t threads = 1);

// "h\tr\tdirection\tgold\trank" per line, raw ids.
std::string RanksTsv(const KnowledgeGraph& kg,
                     std::span<const RankResult> ranks);

// Clipped unigram precision times brevity penalty exp(min(0, 1 - r/c)),
// r the reference length closest to c (shorter wins ties). Empty candidate
// scores 0.
double Bleu1(std::span<const std::string> candidate,
             const std::vector<std::vector<std::string>>& references);

struct CostModelInput {
  double description_length = 0;  // |L|
  double entities = 0;            // |E|
  double relations = 0;           // |R|
  std::string method;
};

struct CostModelResult {
  std::string method;
  std::string expression;    // e.g. "O(|L|^2|E|^2|R|)"
  std::string instantiated;  // e.g. "2^2 * 3^2 * 5"
  double value = 0.0;
};

// Per-query cost of scoring a KG with a small-PLM method: KGBERT, StAR,
// SimKGC, kNN-KGE, KGT5, GenKGC.
CostModelResult CostModel(const CostModelInput& input);
const std::vector<std::string>& CostModelMethods();

}  // namespace kglab

#endif  // KGLAB_EVAL_H_
