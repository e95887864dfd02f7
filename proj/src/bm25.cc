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

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "kglab/llm.h"

namespace kglab {

std::vector<std::string> Bm25Index::Analyze(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(u < 128 ? static_cast<char>(std::tolower(u)) : c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Bm25Index Bm25Index::Build(const std::vector<std::string>& corpus,
                           Bm25Params params) {
  Bm25Index index;
  index.params_ = params;
  std::size_t total = 0;
  for (std::size_t doc = 0; doc < corpus.size(); ++doc) {
    const auto tokens = Analyze(corpus[doc]);
    index.doc_lengths_.push_back(tokens.size());
    total += tokens.size();
    std::map<std::string, std::size_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, count] : tf) {
      index.postings_[term].push_back({doc, count});
    }
  }
  if (!corpus.empty()) {
    index.avg_length_ =
        static_cast<double>(total) / static_cast<double>(corpus.size());
  }
  return index;
}

std::size_t Bm25Index::document_frequency(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

double Bm25Index::Idf(const std::string& term) const {
  const auto n = static_cast<double>(size());
  const auto df = static_cast<double>(document_frequency(term));
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

std::vector<Bm25Hit> Bm25Index::ScoreAll(std::string_view query) const {
  std::map<std::size_t, double> scores;
  if (avg_length_ <= 0.0) {
    // Every document is empty: nothing can overlap a query.
    return {};
  }
  for (const auto& term : Analyze(query)) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double idf = Idf(term);
    for (const Posting& p : it->second) {
      const double tf = static_cast<double>(p.tf);
      const double norm =
          params_.k1 * (1.0 - params_.b +
                        params_.b * static_cast<double>(doc_lengths_[p.doc]) /
                            avg_length_);
      scores[p.doc] += idf * tf * (params_.k1 + 1.0) / (tf + norm);
    }
  }
  std::vector<Bm25Hit> out;
  out.reserve(scores.size());
  for (const auto& [doc, s] : scores) out.push_back({doc, s});
  return out;
}

std::vector<Bm25Hit> Bm25Index::TopN(std::string_view query,
                                     std::size_t n) const {
  std::vector<Bm25Hit> hits = ScoreAll(query);
  std::sort(hits.begin(), hits.end(), [](const Bm25Hit& a, const Bm25Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc < b.doc;
  });
  if (hits.size() > n) hits.resize(n);
  return hits;
}

TripleRetriever::TripleRetriever(const KnowledgeGraph& kg, Bm25Params params)
    : kg_(&kg) {
  std::vector<std::string> corpus;
  corpus.reserve(kg.train().size());
  for (const Triple& t : kg.train()) corpus.push_back(VerbalizeTriple(kg, t));
  index_ = Bm25Index::Build(corpus, params);
}

std::string TripleRetriever::QueryText(EntityId head,
                                       RelationId relation) const {
  return NormalizeText(kg_->entity(head).surface_name) + " " +
         RelationSurface(kg_->relation(relation).surface_name);
}

std::vector<Bm25Hit> TripleRetriever::Retrieve(EntityId head,
                                               RelationId relation,
                                               std::size_t n) const {
  return index_.TopN(QueryText(head, relation), n);
}

std::vector<EntityId> SelectCandidateIds(const TripleRetriever& retriever,
                                         EntityId head, RelationId relation,
                                         std::size_t n) {
  std::vector<EntityId> out;
  if (n == 0) return out;
  std::set<EntityId> seen;
  for (const Bm25Hit& hit :
       retriever.Retrieve(head, relation, retriever.index().size())) {
    const EntityId tail = retriever.kg().train()[hit.doc].tail;
    if (seen.insert(tail).second) {
      out.push_back(tail);
      if (out.size() == n) break;
    }
  }
  return out;
}

std::vector<std::string> SelectCandidates(const TripleRetriever& retriever,
                                          EntityId head, RelationId relation,
                                          std::size_t n) {
  std::vector<std::string> out;
  for (EntityId id : SelectCandidateIds(retriever, head, relation, n)) {
    out.push_back(retriever.kg().entity(id).surface_name);
  }
  return out;
}

}  // namespace kglab
