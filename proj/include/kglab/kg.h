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

#ifndef KGLAB_KG_H_
#define KGLAB_KG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kglab/common.h"

namespace kglab {

struct Entity {
  EntityId id = 0;
  std::string raw_id;
  std::string surface_name;
  std::string description;
};

struct Relation {
  RelationId id = 0;
  std::string raw_id;
  std::string surface_name;
  std::string description;
};

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

enum class Split { kTrain, kValid, kTest };
std::string_view SplitName(Split s);
Split ParseSplit(std::string_view name);

// One train-split edge seen from `entity`. Outgoing edges have the entity as
// head, incoming edges have it as tail.
struct AdjacentEdge {
  RelationId relation = 0;
  EntityId neighbor = 0;
  bool outgoing = true;

  friend auto operator<=>(const AdjacentEdge&, const AdjacentEdge&) = default;
};

struct SplitPaths {
  std::filesystem::path train;
  std::filesystem::path valid;
  std::filesystem::path test;
};

// Text-rich knowledge graph with dense ids. Immutable once built.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Builds a graph from already-dense parts. Validates every id, rejects
  // duplicate triples inside a split and derives the adjacency from train.
  KnowledgeGraph(std::vector<Entity> entities, std::vector<Relation> relations,
                 std::vector<Triple> train, std::vector<Triple> valid,
                 std::vector<Triple> test);

  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }

  const Entity& entity(EntityId id) const;
  const Relation& relation(RelationId id) const;
  const std::vector<Entity>& entities() const { return entities_; }
  const std::vector<Relation>& relations() const { return relations_; }

  const std::vector<Triple>& split(Split s) const;
  const std::vector<Triple>& train() const { return train_; }
  const std::vector<Triple>& valid() const { return valid_; }
  const std::vector<Triple>& test() const { return test_; }

  // Train-split edges touching `id`, in train-file order.
  const std::vector<AdjacentEdge>& adjacency(EntityId id) const;

  bool valid_entity(EntityId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < entities_.size();
  }
  bool valid_relation(RelationId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < relations_.size();
  }

  std::optional<EntityId> find_entity(std::string_view raw_id) const;
  std::optional<RelationId> find_relation(std::string_view raw_id) const;

  // Throws DataError naming the offending id.
  void check_triple(const Triple& t) const;

 private:
  std::vector<Entity> entities_;
  std::vector<Relation> relations_;
  std::vector<Triple> train_, valid_, test_;
  std::vector<std::vector<AdjacentEdge>> adjacency_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
};

// Reads WN18RR / FB15k-237 style TSV files. Dense ids follow the order of
// first appearance in the text files. An empty split path yields an empty
// split.
KnowledgeGraph LoadKnowledgeGraph(const SplitPaths& triples,
                                  const std::filesystem::path& entity_text,
                                  const std::filesystem::path& relation_text);

// {"entities": N, "relations": M, "train": a, "valid": b, "test": c}
std::string LoaderReportJson(const KnowledgeGraph& kg);

// Known-true answers over the union of all splits.
class FilterIndex {
 public:
  FilterIndex() = default;
  explicit FilterIndex(const KnowledgeGraph& kg);

  // Tails t with (head, relation, t) in some split.
  const std::set<EntityId>& tails(EntityId head, RelationId relation) const;
  // Heads h with (h, relation, tail) in some split.
  const std::set<EntityId>& heads(EntityId tail, RelationId relation) const;

  // Known answers for a query given the known entity and direction.
  const std::set<EntityId>& answers(EntityId known, RelationId relation,
                                    Direction direction) const;

  bool contains(const Triple& t) const;

 private:
  std::map<std::pair<EntityId, RelationId>, std::set<EntityId>> tails_;
  std::map<std::pair<EntityId, RelationId>, std::set<EntityId>> heads_;
};

FilterIndex BuildFilterSets(const KnowledgeGraph& kg);

// Uniform sample without replacement of at most k adjacency entries of the
// entity, deterministic for a fixed seed. Returned in sampled order.
std::vector<AdjacentEdge> SampleNeighbors(const KnowledgeGraph& kg,
                                          EntityId entity, std::size_t k,
                                          std::uint64_t seed);

// Replaces tabs, newlines and runs of whitespace with single spaces and trims.
std::string NormalizeText(std::string_view text);

// Relation ids such as "/film/actor/film" or "_hypernym" become readable
// words: underscores and slashes map to spaces, then whitespace collapses.
std::string RelationSurface(std::string_view name);

// "<head name> <relation surface> <tail name>"
std::string VerbalizeTriple(const KnowledgeGraph& kg, const Triple& t);

// Plain-text snapshot of an indexed graph. Round-trips exactly.
void WriteSnapshot(const KnowledgeGraph& kg, const std::filesystem::path& path);
KnowledgeGraph ReadSnapshot(const std::filesystem::path& path);

}  // namespace kglab

#endif  // KGLAB_KG_H_
