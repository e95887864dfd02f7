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

#ifndef KGLAB_SCORING_H_
#define KGLAB_SCORING_H_

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kglab/common.h"
#include "kglab/encoders.h"
#include "kglab/kg.h"
#include "kglab/serialize.h"

namespace kglab {

// Trainable state. Empty projection matrices mean identity.
struct ModelParameters {
  Matrix entity_table;        // |E| x d, row i is entity i
  Matrix relation_table;      // |R| x d
  Matrix query_projection;    // d x d, two-tower <h,r> tower
  Matrix tail_projection;     // d x d, two-tower tail tower
  Matrix context_projection;  // d x d, masked-entity context
  Vector classifier_weights;  // d, joint classifier
  double classifier_bias = 0.0;
  double temperature = 0.05;

  std::size_t dimension() const {
    return static_cast<std::size_t>(entity_table.cols());
  }

  // Zero-mean Gaussian tables with the given scale; projections identity
  // when requested, classifier zero.
  static ModelParameters Initialize(std::size_t num_entities,
                                    std::size_t num_relations, std::size_t d,
                                    double init_scale, bool with_projections,
                                    std::uint64_t seed);

  bool AllFinite() const;
  // Throws NumericError unless every tensor has the same shape as `other`.
  void CheckSameShape(const ModelParameters& other) const;

  // Visits every trainable tensor as a flat span (same order each call).
  void ForEachTensor(const std::function<void(std::span<double>)>& fn);
  void ForEachTensor(
      const std::function<void(std::span<const double>)>& fn) const;
};

// Numerically stable log-softmax (max subtracted first).
Vector LogSoftmax(const Vector& logits);

double Sigmoid(double x);

// sigmoid(w . encode(joint sequence) + b)
double ScoreJoint(const ModelParameters& params, const EncoderProvider& provider,
                  const KnowledgeGraph& kg, const Triple& triple,
                  const SerializeConfig& cfg);
double ScoreJointFeatures(const ModelParameters& params, const Vector& features);

// Cosine similarity; throws NumericError on zero vectors or mismatched size.
double ScoreTwoTower(const Vector& hr, const Vector& tail);

// Log-softmax over the candidate set of entity_table[j] . (P ctx).
Vector ScoreMaskedEntity(const ModelParameters& params, const Vector& context,
                         std::span<const EntityId> candidates);

// Context after the optional masked-entity projection.
Vector ProjectContext(const ModelParameters& params, const Vector& context);

// Teacher-forced sum of log p(target_i | context, target_<i).
double ScoreGeneration(const LogProbProvider& lp,
                       std::span<const std::string> context,
                       std::span<const std::string> target);

// Prefix tree over tokenized entity names. Several entities may end at the
// same node (identical names) and a node may end one entity while continuing
// towards longer names.
class EntityTrie {
 public:
  struct Node {
    std::map<std::string, std::size_t> children;
    std::vector<EntityId> terminals;
  };

  EntityTrie();
  void Insert(EntityId id, const std::vector<std::string>& tokens);

  static EntityTrie FromGraph(const KnowledgeGraph& kg,
                              const SerializeConfig& cfg);
  // Fixture format: "entity_id\ttoken token ..." per line.
  static EntityTrie Load(const std::filesystem::path& path);
  void Save(const std::filesystem::path& path) const;

  const Node& node(std::size_t i) const { return nodes_[i]; }
  std::size_t root() const { return 0; }
  std::size_t num_entities() const { return paths_.size(); }
  const std::map<EntityId, std::vector<std::string>>& paths() const {
    return paths_;
  }

 private:
  std::vector<Node> nodes_;
  std::map<EntityId, std::vector<std::string>> paths_;
};

struct ScoredEntity {
  EntityId entity = 0;
  double score = 0.0;
};

// Beam search restricted to trie continuations. Every returned entry is an
// entity whose full name was decoded; sorted by log-probability, ties by
// ascending id; at most `beam` entries.
std::vector<ScoredEntity> DecodeConstrained(const LogProbProvider& lp,
                                            std::span<const std::string> context,
                                            const EntityTrie& trie,
                                            std::size_t beam);

// Sorts by descending score, ties by ascending id.
void SortScored(std::vector<ScoredEntity>& items);

}  // namespace kglab

#endif  // KGLAB_SCORING_H_
