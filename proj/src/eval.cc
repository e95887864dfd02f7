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

#include "kglab/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "json.hpp"

namespace kglab {
namespace {

std::string Num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

std::string MetricsReport::ToJson() const {
  nlohmann::ordered_json j;
  j["hits1"] = hits1;
  j["hits3"] = hits3;
  j["hits10"] = hits10;
  j["mr"] = mr;
  j["mrr"] = mrr;
  j["count"] = count;
  return j.dump();
}

std::size_t RankGold(std::span<const double> scores, EntityId gold,
                     const std::set<EntityId>& filter_true) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= scores.size()) {
    throw DataError("gold entity " + std::to_string(gold) + " has no score");
  }
  const double g = scores[gold];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto id = static_cast<EntityId>(i);
    if (id == gold || filter_true.contains(id)) continue;
    if (scores[i] >= g) ++rank;
  }
  return rank;
}

std::size_t RankGold(const std::map<EntityId, double>& scores, EntityId gold,
                     const std::set<EntityId>& filter_true) {
  auto it = scores.find(gold);
  if (it == scores.end()) {
    throw DataError("gold entity " + std::to_string(gold) + " has no score");
  }
  std::size_t rank = 1;
  for (const auto& [id, s] : scores) {
    if (id == gold || filter_true.contains(id)) continue;
    if (s >= it->second) ++rank;
  }
  return rank;
}

MetricsReport ComputeMetrics(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw DataError("cannot compute metrics of zero ranks");
  MetricsReport r;
  r.count = ranks.size();
  double sum_rank = 0.0, sum_rr = 0.0;
  std::size_t h1 = 0, h3 = 0, h10 = 0;
  for (std::size_t rank : ranks) {
    if (rank < 1) throw DataError("rank must be at least 1");
    h1 += rank <= 1;
    h3 += rank <= 3;
    h10 += rank <= 10;
    sum_rank += static_cast<double>(rank);
    sum_rr += 1.0 / static_cast<double>(rank);
  }
  const auto n = static_cast<double>(ranks.size());
  r.hits1 = static_cast<double>(h1) / n;
  r.hits3 = static_cast<double>(h3) / n;
  r.hits10 = static_cast<double>(h10) / n;
  r.mr = sum_rank / n;
  r.mrr = sum_rr / n;
  return r;
}

Directions ParseDirections(std::string_view name) {
  if (name == "tail") return Directions::kTail;
  if (name == "head") return Directions::kHead;
  if (name == "both") return Directions::kBoth;
  throw ConfigError("unknown directions: " + std::string(name));
}

LinkPredictionResult LinkPredictionEval(const QueryScorer& scorer,
                                        const KnowledgeGraph& kg,
                                        std::span<const Triple> triples,
                                        const FilterIndex& filter,
                                        Directions directions,
                                        std::size_t threads) {
  std::vector<RankResult> queries;
  for (const Triple& t : triples) {
    kg.check_triple(t);
    if (directions != Directions::kHead) {
      queries.push_back({t.head, t.relation, Direction::kPredictTail, t.tail, 1});
    }
    if (directions != Directions::kTail) {
      queries.push_back({t.tail, t.relation, Direction::kPredictHead, t.head, 1});
    }
  }
  auto rank_one = [&](RankResult& q) {
    const std::vector<double> scores = scorer(q.known, q.relation, q.direction);
    if (scores.size() != kg.num_entities()) {
      throw DataError("scorer returned " + std::to_string(scores.size()) +
                      " scores for " + std::to_string(kg.num_entities()) +
                      " entities");
    }
    q.rank = RankGold(scores, q.gold,
                      filter.answers(q.known, q.relation, q.direction));
  };
  threads = std::max<std::size_t>(1, std::min(threads, queries.size()));
  if (threads == 1) {
    for (auto& q : queries) rank_one(q);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < queries.size(); i += threads) {
            rank_one(queries[i]);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  LinkPredictionResult out;
  std::vector<std::size_t> ranks;
  ranks.reserve(queries.size());
  for (const auto& q : queries) ranks.push_back(q.rank);
  out.report = ComputeMetrics(ranks);
  out.ranks = std::move(queries);
  return out;
}

std::string RanksTsv(const KnowledgeGraph& kg,
                     std::span<const RankResult> ranks) {
  std::ostringstream out;
  for (const auto& r : ranks) {
    out << kg.entity(r.known).raw_id << '\t' << kg.relation(r.relation).raw_id
        << '\t' << DirectionName(r.direction) << '\t'
        << kg.entity(r.gold).raw_id << '\t' << r.rank << '\n';
  }
  return out.str();
}

double Bleu1(std::span<const std::string> candidate,
             const std::vector<std::vector<std::string>>& references) {
  if (references.empty()) throw DataError("BLEU-1 needs at least one reference");
  if (candidate.empty()) return 0.0;
  std::unordered_map<std::string, std::size_t> cand_counts;
  for (const auto& w : candidate) ++cand_counts[w];
  std::unordered_map<std::string, std::size_t> max_ref;
  for (const auto& ref : references) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& w : ref) ++counts[w];
    for (const auto& [w, c] : counts) {
      max_ref[w] = std::max(max_ref[w], c);
    }
  }
  std::size_t clipped = 0;
  for (const auto& [w, c] : cand_counts) {
    auto it = max_ref.find(w);
    if (it != max_ref.end()) clipped += std::min(c, it->second);
  }
  const auto c = static_cast<double>(candidate.size());
  double closest = static_cast<double>(references.front().size());
  for (const auto& ref : references) {
    const auto r = static_cast<double>(ref.size());
    const double dr = std::abs(r - c);
    const double dbest = std::abs(closest - c);
    if (dr < dbest || (dr == dbest && r < closest)) closest = r;
  }
  const double precision = static_cast<double>(clipped) / c;
  const double bp = std::exp(std::min(0.0, 1.0 - closest / c));
  return precision * bp;
}

const std::vector<std::string>& CostModelMethods() {
  static const std::vector<std::string> kMethods = {
      "KGBERT", "StAR", "SimKGC", "kNN-KGE", "KGT5", "GenKGC"};
  return kMethods;
}

CostModelResult CostModel(const CostModelInput& in) {
  if (!(in.description_length > 0 && in.entities > 0 && in.relations > 0)) {
    throw ConfigError("cost model inputs must be positive");
  }
  const double l = in.description_length, e = in.entities, r = in.relations;
  const double half = l / 2.0;
  CostModelResult out;
  out.method = in.method;
  if (in.method == "KGBERT") {
    out.expression = "O(|L|^2|E|^2|R|)";
    out.instantiated = Num(l) + "^2 * " + Num(e) + "^2 * " + Num(r);
    out.value = l * l * e * e * r;
  } else if (in.method == "StAR" || in.method == "SimKGC") {
    out.expression = "O(|L/2|^2|E|(1+|R|))";
    out.instantiated = Num(half) + "^2 * " + Num(e) + " * (1 + " + Num(r) + ")";
    out.value = half * half * e * (1.0 + r);
  } else if (in.method == "kNN-KGE") {
    out.expression = "O(|L|^2|E||R|)";
    out.instantiated = Num(l) + "^2 * " + Num(e) + " * " + Num(r);
    out.value = l * l * e * r;
  } else if (in.method == "KGT5" || in.method == "GenKGC") {
    out.expression = "O(|L/2|^3|E||R|)";
    out.instantiated = Num(half) + "^3 * " + Num(e) + " * " + Num(r);
    out.value = half * half * half * e * r;
  } else {
    throw ConfigError("unknown cost-model method: " + in.method);
  }
  return out;
}

}  // namespace kglab
