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

#include "kglab/kg.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace kglab {
namespace {

const std::set<EntityId>& EmptySet() {
  static const std::set<EntityId> kEmpty;
  return kEmpty;
}

std::vector<std::string> SplitTabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

// Calls fn(line_number, columns) for every non-blank line.
template <typename Fn>
void ForEachTsvLine(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line_no, SplitTabs(line));
  }
}

std::string Where(const std::filesystem::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

template <typename Item>
void ReadTextFile(const std::filesystem::path& path, std::vector<Item>& items,
                  std::unordered_map<std::string, std::int32_t>& index) {
  ForEachTsvLine(path, [&](std::size_t line_no,
                           const std::vector<std::string>& cols) {
    if (cols.size() != 2 && cols.size() != 3) {
      throw DataError("malformed line at " + Where(path, line_no) +
                      ": expected 2 or 3 tab-separated columns, got " +
                      std::to_string(cols.size()));
    }
    if (cols[0].empty()) {
      throw DataError("empty raw id at " + Where(path, line_no));
    }
    if (index.contains(cols[0])) return;  // first appearance wins
    Item item;
    item.id = static_cast<std::int32_t>(items.size());
    item.raw_id = cols[0];
    item.surface_name = NormalizeText(cols[1]);
    if (item.surface_name.empty()) {
      throw DataError("empty name at " + Where(path, line_no));
    }
    if (cols.size() == 3) item.description = NormalizeText(cols[2]);
    index.emplace(item.raw_id, item.id);
    items.push_back(std::move(item));
  });
}

std::vector<Triple> ReadTriples(
    const std::filesystem::path& path,
    const std::unordered_map<std::string, std::int32_t>& entities,
    const std::unordered_map<std::string, std::int32_t>& relations) {
  std::vector<Triple> out;
  if (path.empty()) return out;
  std::set<Triple> seen;
  ForEachTsvLine(path, [&](std::size_t line_no,
                           const std::vector<std::string>& cols) {
    if (cols.size() != 3) {
      throw DataError("malformed line at " + Where(path, line_no) +
                      ": expected 3 tab-separated columns, got " +
                      std::to_string(cols.size()));
    }
    auto lookup = [&](const std::unordered_map<std::string, std::int32_t>& m,
                      const std::string& raw, const char* what) {
      auto it = m.find(raw);
      if (it == m.end()) {
        throw DataError(std::string("unknown ") + what + " '" + raw +
                        "' at " + Where(path, line_no));
      }
      return it->second;
    };
    Triple t{lookup(entities, cols[0], "entity"),
             lookup(relations, cols[1], "relation"),
             lookup(entities, cols[2], "entity")};
    if (seen.insert(t).second) out.push_back(t);
  });
  return out;
}

}  // namespace

std::string_view DirectionName(Direction d) {
  return d == Direction::kPredictTail ? "tail" : "head";
}

Direction ParseDirection(std::string_view name) {
  if (name == "tail" || name == "predict_tail") return Direction::kPredictTail;
  if (name == "head" || name == "predict_head") return Direction::kPredictHead;
  throw ConfigError("unknown direction: " + std::string(name));
}

std::uint64_t StableHash(std::string_view text, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

std::string_view SplitName(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

Split ParseSplit(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split: " + std::string(name));
}

KnowledgeGraph::KnowledgeGraph(std::vector<Entity> entities,
                               std::vector<Relation> relations,
                               std::vector<Triple> train,
                               std::vector<Triple> valid,
                               std::vector<Triple> test)
    : entities_(std::move(entities)),
      relations_(std::move(relations)),
      train_(std::move(train)),
      valid_(std::move(valid)),
      test_(std::move(test)) {
  for (std::size_t i = 0; i < entities_.size(); ++i) {
    if (entities_[i].id != static_cast<EntityId>(i)) {
      throw DataError("entity ids must be contiguous");
    }
    if (entities_[i].surface_name.empty()) {
      throw DataError("entity " + entities_[i].raw_id + " has an empty name");
    }
    if (!entity_index_.emplace(entities_[i].raw_id, entities_[i].id).second) {
      throw DataError("duplicate entity raw id: " + entities_[i].raw_id);
    }
  }
  for (std::size_t i = 0; i < relations_.size(); ++i) {
    if (relations_[i].id != static_cast<RelationId>(i)) {
      throw DataError("relation ids must be contiguous");
    }
    if (!relation_index_.emplace(relations_[i].raw_id, relations_[i].id)
             .second) {
      throw DataError("duplicate relation raw id: " + relations_[i].raw_id);
    }
  }
  for (const auto* s : {&train_, &valid_, &test_}) {
    std::set<Triple> seen;
    for (const Triple& t : *s) {
      check_triple(t);
      if (!seen.insert(t).second) {
        throw DataError("duplicate triple within a split");
      }
    }
  }
  adjacency_.resize(entities_.size());
  for (const Triple& t : train_) {
    adjacency_[t.head].push_back({t.relation, t.tail, true});
    adjacency_[t.tail].push_back({t.relation, t.head, false});
  }
}

const Entity& KnowledgeGraph::entity(EntityId id) const {
  if (!valid_entity(id)) {
    throw DataError("unknown entity id " + std::to_string(id));
  }
  return entities_[id];
}

const Relation& KnowledgeGraph::relation(RelationId id) const {
  if (!valid_relation(id)) {
    throw DataError("unknown relation id " + std::to_string(id));
  }
  return relations_[id];
}

const std::vector<Triple>& KnowledgeGraph::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train_;
    case Split::kValid: return valid_;
    case Split::kTest: return test_;
  }
  return train_;
}

const std::vector<AdjacentEdge>& KnowledgeGraph::adjacency(EntityId id) const {
  if (!valid_entity(id)) {
    throw DataError("unknown entity id " + std::to_string(id));
  }
  return adjacency_[id];
}

std::optional<EntityId> KnowledgeGraph::find_entity(
    std::string_view raw_id) const {
  auto it = entity_index_.find(std::string(raw_id));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(
    std::string_view raw_id) const {
  auto it = relation_index_.find(std::string(raw_id));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

void KnowledgeGraph::check_triple(const Triple& t) const {
  if (!valid_entity(t.head)) {
    throw DataError("unknown head entity id " + std::to_string(t.head));
  }
  if (!valid_relation(t.relation)) {
    throw DataError("unknown relation id " + std::to_string(t.relation));
  }
  if (!valid_entity(t.tail)) {
    throw DataError("unknown tail entity id " + std::to_string(t.tail));
  }
}

KnowledgeGraph LoadKnowledgeGraph(const SplitPaths& triples,
                                  const std::filesystem::path& entity_text,
                                  const std::filesystem::path& relation_text) {
  std::vector<Entity> entities;
  std::vector<Relation> relations;
  std::unordered_map<std::string, std::int32_t> entity_index;
  std::unordered_map<std::string, std::int32_t> relation_index;
  ReadTextFile(entity_text, entities, entity_index);
  ReadTextFile(relation_text, relations, relation_index);
  if (triples.train.empty()) throw DataError("train split path is required");
  auto train = ReadTriples(triples.train, entity_index, relation_index);
  auto valid = ReadTriples(triples.valid, entity_index, relation_index);
  auto test = ReadTriples(triples.test, entity_index, relation_index);
  return KnowledgeGraph(std::move(entities), std::move(relations),
                        std::move(train), std::move(valid), std::move(test));
}

std::string LoaderReportJson(const KnowledgeGraph& kg) {
  nlohmann::ordered_json j;
  j["entities"] = kg.num_entities();
  j["relations"] = kg.num_relations();
  j["train"] = kg.train().size();
  j["valid"] = kg.valid().size();
  j["test"] = kg.test().size();
  return j.dump();
}

FilterIndex::FilterIndex(const KnowledgeGraph& kg) {
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    for (const Triple& t : kg.split(s)) {
      tails_[{t.head, t.relation}].insert(t.tail);
      heads_[{t.tail, t.relation}].insert(t.head);
    }
  }
}

const std::set<EntityId>& FilterIndex::tails(EntityId head,
                                             RelationId relation) const {
  auto it = tails_.find({head, relation});
  return it == tails_.end() ? EmptySet() : it->second;
}

const std::set<EntityId>& FilterIndex::heads(EntityId tail,
                                             RelationId relation) const {
  auto it = heads_.find({tail, relation});
  return it == heads_.end() ? EmptySet() : it->second;
}

const std::set<EntityId>& FilterIndex::answers(EntityId known,
                                               RelationId relation,
                                               Direction direction) const {
  return direction == Direction::kPredictTail ? tails(known, relation)
                                              : heads(known, relation);
}

bool FilterIndex::contains(const Triple& t) const {
  return tails(t.head, t.relation).contains(t.tail);
}

FilterIndex BuildFilterSets(const KnowledgeGraph& kg) {
  return FilterIndex(kg);
}

std::vector<AdjacentEdge> SampleNeighbors(const KnowledgeGraph& kg,
                                          EntityId entity, std::size_t k,
                                          std::uint64_t seed) {
  const auto& edges = kg.adjacency(entity);
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(k, order.size());
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL *
                              (static_cast<std::uint64_t>(entity) + 1)));
  // Partial Fisher-Yates: the first `take` slots are a uniform sample.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<AdjacentEdge> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(edges[order[i]]);
  return out;
}

std::string NormalizeText(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
        c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string RelationSurface(std::string_view name) {
  std::string replaced(name);
  std::replace(replaced.begin(), replaced.end(), '_', ' ');
  std::replace(replaced.begin(), replaced.end(), '/', ' ');
  return NormalizeText(replaced);
}

std::string VerbalizeTriple(const KnowledgeGraph& kg, const Triple& t) {
  kg.check_triple(t);
  return NormalizeText(kg.entity(t.head).surface_name) + " " +
         RelationSurface(kg.relation(t.relation).surface_name) + " " +
         NormalizeText(kg.entity(t.tail).surface_name);
}

void WriteSnapshot(const KnowledgeGraph& kg,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write snapshot: " + path.string());
  out << "kglab-snapshot 1\n";
  out << "entities " << kg.num_entities() << "\n";
  for (const Entity& e : kg.entities()) {
    out << e.raw_id << '\t' << e.surface_name << '\t' << e.description << '\n';
  }
  out << "relations " << kg.num_relations() << "\n";
  for (const Relation& r : kg.relations()) {
    out << r.raw_id << '\t' << r.surface_name << '\t' << r.description << '\n';
  }
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    out << SplitName(s) << ' ' << kg.split(s).size() << "\n";
    for (const Triple& t : kg.split(s)) {
      out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
    }
  }
  if (!out) throw DataError("failed writing snapshot: " + path.string());
}

KnowledgeGraph ReadSnapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open snapshot: " + path.string());
  std::string line;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) {
      throw DataError("truncated snapshot: " + path.string());
    }
    return line;
  };
  auto header = [&](std::string_view tag) {
    std::istringstream hs(next());
    std::string got;
    std::size_t n = 0;
    if (!(hs >> got >> n) || got != tag) {
      throw DataError("bad snapshot section, expected " + std::string(tag));
    }
    return n;
  };
  if (next() != "kglab-snapshot 1") {
    throw DataError("not a kglab snapshot: " + path.string());
  }
  auto read_items = [&](auto& items, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      auto cols = SplitTabs(next());
      if (cols.size() != 3) throw DataError("bad snapshot text row");
      auto& item = items.emplace_back();
      item.id = static_cast<std::int32_t>(i);
      item.raw_id = cols[0];
      item.surface_name = cols[1];
      item.description = cols[2];
    }
  };
  std::vector<Entity> entities;
  std::vector<Relation> relations;
  read_items(entities, header("entities"));
  read_items(relations, header("relations"));
  std::vector<Triple> splits[3];
  for (int s = 0; s < 3; ++s) {
    const std::size_t n = header(SplitName(static_cast<Split>(s)));
    for (std::size_t i = 0; i < n; ++i) {
      std::istringstream ts(next());
      Triple t;
      if (!(ts >> t.head >> t.relation >> t.tail)) {
        throw DataError("bad snapshot triple row");
      }
      splits[s].push_back(t);
    }
  }
  return KnowledgeGraph(std::move(entities), std::move(relations),
                        std::move(splits[0]), std::move(splits[1]),
                        std::move(splits[2]));
}

}  // namespace kglab
