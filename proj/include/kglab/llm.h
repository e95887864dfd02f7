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

#ifndef KGLAB_LLM_H_
#define KGLAB_LLM_H_

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kglab/common.h"
#include "kglab/http.h"
#include "kglab/kg.h"

namespace kglab {

// ---- BM25 -------------------------------------------------------------------

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct Bm25Hit {
  std::size_t doc = 0;
  double score = 0.0;
};

// Okapi BM25 over whitespace-split, lowercased tokens with
// idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1).
class Bm25Index {
 public:
  Bm25Index() = default;
  static Bm25Index Build(const std::vector<std::string>& corpus,
                         Bm25Params params = {});

  static std::vector<std::string> Analyze(std::string_view text);

  std::size_t size() const { return doc_lengths_.size(); }
  double average_length() const { return avg_length_; }
  std::size_t document_frequency(const std::string& term) const;
  double Idf(const std::string& term) const;
  const Bm25Params& params() const { return params_; }

  // Score of every document containing at least one query term; repeated
  // query terms count once per occurrence.
  std::vector<Bm25Hit> ScoreAll(std::string_view query) const;

  // Descending score, ties by ascending doc id, at most n. Documents without
  // any query term are never returned.
  std::vector<Bm25Hit> TopN(std::string_view query, std::size_t n) const;

 private:
  struct Posting {
    std::size_t doc;
    std::size_t tf;
  };
  Bm25Params params_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<std::size_t> doc_lengths_;
  double avg_length_ = 0.0;
};

// BM25 over the verbalized train triples; doc id = train index.
class TripleRetriever {
 public:
  explicit TripleRetriever(const KnowledgeGraph& kg, Bm25Params params = {});

  const Bm25Index& index() const { return index_; }
  const KnowledgeGraph& kg() const { return *kg_; }

  // "<head name> <relation surface>"
  std::string QueryText(EntityId head, RelationId relation) const;

  // Train triples ranked for the (head, relation) query.
  std::vector<Bm25Hit> Retrieve(EntityId head, RelationId relation,
                                std::size_t n) const;

 private:
  const KnowledgeGraph* kg_;
  Bm25Index index_;
};

// Tails of the retrieved train triples in retrieval order, deduplicated,
// at most n.
std::vector<EntityId> SelectCandidateIds(const TripleRetriever& retriever,
                                         EntityId head, RelationId relation,
                                         std::size_t n = 100);
// Same, as surface names; ids never reach a prompt.
std::vector<std::string> SelectCandidates(const TripleRetriever& retriever,
                                          EntityId head, RelationId relation,
                                          std::size_t n = 100);

// ---- Prompts ----------------------------------------------------------------

struct Demonstration {
  std::string question;
  std::string answer;
  std::optional<std::string> rationale;
};

struct Prompt {
  std::string task_description;
  std::vector<std::string> candidates;
  std::vector<Demonstration> demonstrations;
  std::string test_query;
  std::string rendered;
};

extern const char kDefaultTaskDescription[];

// "(<head name>, <relation surface>, ?)"
std::string QuestionText(const KnowledgeGraph& kg, EntityId head,
                         RelationId relation);

// "<head> is connected to <tail> via <relation>, so the answer is <tail>."
std::string TemplateRationale(const KnowledgeGraph& kg, const Triple& t);

// Top-n retrieved train triples as question/answer pairs, optionally with a
// templated rationale.
std::vector<Demonstration> SelectDemonstrations(const TripleRetriever& retriever,
                                                EntityId head,
                                                RelationId relation,
                                                std::size_t n = 5,
                                                bool with_rationale = false);

// Layout:
//   <task description>
//   Candidates: a, b, c
//
//   Q: <question> [<rationale>] A: <answer>     (one line per demonstration)
//
//   Q: <test> A: <single trailing space>
// A candidate containing a comma or quote is written double-quoted with
// inner quotes doubled. Throws DataError on an empty candidate list.
Prompt BuildPrompt(std::string_view task_description,
                   std::vector<std::string> candidates,
                   std::vector<Demonstration> demonstrations,
                   std::string_view test_query);

// Recovers the candidate list from a rendered prompt.
std::vector<std::string> ParseCandidateLine(std::string_view rendered);

// ---- LLM client -------------------------------------------------------------

struct LlmClientConfig {
  std::string endpoint;  // KGLAB_API_BASE
  std::string api_key;   // KGLAB_API_KEY
  std::string model = "gpt-3.5-turbo";
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds timeout{60000};
  std::chrono::milliseconds min_request_interval{100};
  double temperature = 0.0;

  static LlmClientConfig FromEnvironment();
  // Throws ConfigError on a missing endpoint or credential.
  void Validate() const;
  RetryPolicy Retry() const;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string Complete(const Prompt& prompt) = 0;
};

// OpenAI-compatible chat completions:
//   {"model": m, "temperature": 0, "messages": [{"role": "user", ...}]}
// answer read from choices[0].message.content.
class ChatCompletionClient : public LlmClient {
 public:
  explicit ChatCompletionClient(LlmClientConfig cfg);
  ChatCompletionClient(LlmClientConfig cfg,
                       std::shared_ptr<HttpTransport> transport);

  std::string Complete(const Prompt& prompt) override;
  const RequestStats& stats() const { return stats_; }

 private:
  LlmClientConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
  RateLimiter limiter_;
  RequestStats stats_;
};

class MockLlmClient : public LlmClient {
 public:
  using Responder = std::function<std::string(const Prompt&)>;
  explicit MockLlmClient(Responder responder)
      : responder_(std::move(responder)) {}

  // Returns the scripted responses in order; throws once they run out.
  static std::unique_ptr<MockLlmClient> Scripted(std::vector<std::string> responses);

  std::string Complete(const Prompt& prompt) override;
  std::size_t calls() const { return calls_; }

 private:
  Responder responder_;
  std::size_t calls_ = 0;
};

// ---- Answer parsing and evaluation ------------------------------------------

// Index of the candidate the response names, or nullopt.
//   1. Case-insensitive whole-word substring match; the longest matching
//      candidate wins, then candidate order.
//   2. Otherwise the highest Jaccard overlap of word-token sets, if >= 0.5;
//      ties by candidate order.
std::optional<std::size_t> ParsePrediction(
    std::string_view response, std::span<const std::string> candidates);

// Jaccard similarity of lowercased word tokens (punctuation dropped).
double TokenJaccard(std::string_view a, std::string_view b);

// Even per-relation quota over test relations (ascending relation id), the
// remainder one each in relation-id order; shortfalls of small relations
// move to the next relations in the same order. Within a relation the
// triples are a seeded shuffle.
std::vector<Triple> StratifiedSample(const KnowledgeGraph& kg,
                                     std::span<const Triple> triples,
                                     std::size_t sample_size,
                                     std::uint64_t seed);

struct LlmKgcConfig {
  std::size_t sample_size = 224;
  std::size_t num_candidates = 100;
  std::size_t num_demonstrations = 5;
  bool with_rationale = true;
  std::string task_description = kDefaultTaskDescription;
  std::uint64_t seed = 0;
};

struct TranscriptLine {
  Triple query;
  std::optional<EntityId> prediction;
  std::string raw_response;
  bool hit = false;
  std::string category;  // "1-1" or "1-n" from the filter index

  // {"h","r","gold","prediction","raw_response","hit","category"}, raw ids.
  std::string ToJson(const KnowledgeGraph& kg) const;
};

struct LlmKgcResult {
  double hits1 = 0.0;
  std::vector<TranscriptLine> transcript;
};

// Per sampled test query: candidates, demonstrations, prompt, completion,
// parse, exact-id match. The response is parsed against the prompt's
// candidates first, then against every entity name. Each transcript line is
// handed to `sink` as soon as it exists, so an abort keeps earlier lines.
LlmKgcResult EvaluateLlmKgc(const KnowledgeGraph& kg, const FilterIndex& filter,
                            LlmClient& client, const LlmKgcConfig& cfg,
                            const std::function<void(const TranscriptLine&)>& sink = {});

}  // namespace kglab

#endif  // KGLAB_LLM_H_
