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
#include <map>
#include <random>
#include <set>

#include "json.hpp"
#include "kglab/llm.h"
#include "kglab/serialize.h"

namespace kglab {
namespace {

std::string Lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 128) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

bool IsWordChar(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 128 || std::isalnum(u);
}

// True when `needle` occurs in `hay` with no word character on either side.
bool ContainsWord(const std::string& hay, const std::string& needle) {
  if (needle.empty()) return false;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + 1)) {
    const bool left_ok = pos == 0 || !IsWordChar(hay[pos - 1]) ||
                         !IsWordChar(needle.front());
    const std::size_t end = pos + needle.size();
    const bool right_ok = end == hay.size() || !IsWordChar(hay[end]) ||
                          !IsWordChar(needle.back());
    if (left_ok && right_ok) return true;
  }
  return false;
}

std::set<std::string> WordSet(std::string_view text) {
  SerializeConfig cfg;
  cfg.lowercase = true;
  std::set<std::string> out;
  for (auto& t : Tokenize(text, cfg)) {
    if (t.size() == 1 && std::ispunct(static_cast<unsigned char>(t[0]))) continue;
    out.insert(std::move(t));
  }
  return out;
}

}  // namespace

double TokenJaccard(std::string_view a, std::string_view b) {
  const auto sa = WordSet(a);
  const auto sb = WordSet(b);
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) /
         static_cast<double>(sa.size() + sb.size() - inter);
}

std::optional<std::size_t> ParsePrediction(
    std::string_view response, std::span<const std::string> candidates) {
  const std::string lowered = Lower(response);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::string cand = Lower(NormalizeText(candidates[i]));
    if (!ContainsWord(lowered, cand)) continue;
    if (!best || cand.size() > NormalizeText(candidates[*best]).size()) best = i;
  }
  if (best) return best;
  double best_score = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = TokenJaccard(response, candidates[i]);
    if (s >= 0.5 && s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

std::vector<Triple> StratifiedSample(const KnowledgeGraph& kg,
                                     std::span<const Triple> triples,
                                     std::size_t sample_size,
                                     std::uint64_t seed) {
  if (sample_size > triples.size()) {
    throw ConfigError("sample size " + std::to_string(sample_size) +
                      " exceeds the " + std::to_string(triples.size()) +
                      " available queries");
  }
  std::map<RelationId, std::vector<Triple>> by_relation;
  for (const Triple& t : triples) {
    kg.check_triple(t);
    by_relation[t.relation].push_back(t);
  }
  std::mt19937_64 rng(seed);
  for (auto& [_, group] : by_relation) std::shuffle(group.begin(), group.end(), rng);

  std::map<RelationId, std::size_t> quota;
  std::size_t remaining = sample_size;
  // Repeated even split of what is left over the relations that still have
  // unused triples; the remainder goes one each in relation-id order.
  while (remaining > 0) {
    std::vector<RelationId> open;
    for (const auto& [r, group] : by_relation) {
      if (quota[r] < group.size()) open.push_back(r);
    }
    const std::size_t share = remaining / open.size();
    std::size_t extra = remaining % open.size();
    for (RelationId r : open) {
      std::size_t want = share + (extra > 0 ? 1 : 0);
      if (extra > 0) --extra;
      const std::size_t take = std::min(want, by_relation[r].size() - quota[r]);
      quota[r] += take;
      remaining -= take;
    }
  }
  std::vector<Triple> out;
  for (const auto& [r, group] : by_relation) {
    out.insert(out.end(), group.begin(),
               group.begin() + static_cast<std::ptrdiff_t>(quota[r]));
  }
  return out;
}

std::string TranscriptLine::ToJson(const KnowledgeGraph& kg) const {
  nlohmann::ordered_json j;
  j["h"] = kg.entity(query.head).raw_id;
  j["r"] = kg.relation(query.relation).raw_id;
  j["gold"] = kg.entity(query.tail).raw_id;
  j["prediction"] = prediction ? nlohmann::ordered_json(kg.entity(*prediction).raw_id)
                               : nlohmann::ordered_json(nullptr);
  j["raw_response"] = raw_response;
  j["hit"] = hit;
  j["category"] = category;
  return j.dump();
}

LlmKgcResult EvaluateLlmKgc(const KnowledgeGraph& kg, const FilterIndex& filter,
                            LlmClient& client, const LlmKgcConfig& cfg,
                            const std::function<void(const TranscriptLine&)>& sink) {
  const TripleRetriever retriever(kg);
  const std::vector<Triple> sample =
      StratifiedSample(kg, kg.test(), cfg.sample_size, cfg.seed);
  std::vector<std::string> all_names;
  all_names.reserve(kg.num_entities());
  for (const Entity& e : kg.entities()) all_names.push_back(e.surface_name);

  LlmKgcResult result;
  std::size_t hits = 0;
  for (const Triple& t : sample) {
    const std::vector<EntityId> candidate_ids =
        SelectCandidateIds(retriever, t.head, t.relation, cfg.num_candidates);
    std::vector<std::string> candidate_names;
    for (EntityId id : candidate_ids) {
      candidate_names.push_back(kg.entity(id).surface_name);
    }
    // A query whose (h, r) never occurs in train retrieves nothing; fall back
    // to the whole entity list so the prompt is never empty.
    std::vector<EntityId> prompt_ids = candidate_ids;
    if (candidate_names.empty()) {
      const std::size_t n = std::min(cfg.num_candidates, kg.num_entities());
      for (std::size_t i = 0; i < n; ++i) {
        prompt_ids.push_back(static_cast<EntityId>(i));
        candidate_names.push_back(all_names[i]);
      }
    }
    const Prompt prompt = BuildPrompt(
        cfg.task_description, candidate_names,
        SelectDemonstrations(retriever, t.head, t.relation,
                             cfg.num_demonstrations, cfg.with_rationale),
        QuestionText(kg, t.head, t.relation));

    TranscriptLine line;
    line.query = t;
    line.raw_response = client.Complete(prompt);
    if (auto idx = ParsePrediction(line.raw_response, candidate_names)) {
      line.prediction = prompt_ids[*idx];
    } else if (auto any = ParsePrediction(line.raw_response, all_names)) {
      line.prediction = static_cast<EntityId>(*any);
    }
    line.hit = line.prediction && *line.prediction == t.tail;
    line.category = filter.tails(t.head, t.relation).size() <= 1 ? "1-1" : "1-n";
    hits += line.hit;
    if (sink) sink(line);
    result.transcript.push_back(std::move(line));
  }
  result.hits1 = sample.empty()
                     ? 0.0
                     : static_cast<double>(hits) / static_cast<double>(sample.size());
  return result;
}

}  // namespace kglab
