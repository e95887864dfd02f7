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

#ifndef KGLAB_ENCODERS_H_
#define KGLAB_ENCODERS_H_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kglab/common.h"
#include "kglab/http.h"
#include "kglab/serialize.h"

namespace kglab {

// Maps a serialized sequence to a fixed-dimension embedding. Stands in for a
// frozen pre-trained encoder; nothing in training ever mutates a provider.
class EncoderProvider {
 public:
  virtual ~EncoderProvider() = default;
  virtual std::size_t dimension() const = 0;
  virtual bool deterministic() const { return true; }
  virtual Vector Encode(const TokenSequence& seq) const = 0;
  // Order-preserving; the default encodes one at a time.
  virtual std::vector<Vector> EncodeBatch(
      std::span<const TokenSequence> seqs) const;
};

// Signed feature hashing: each rendered token picks a bucket and a sign from
// a seeded hash, counts accumulate and the result is L2-normalized. A
// sequence with no surviving mass maps to basis vector 0.
Vector HashEncode(const TokenSequence& seq, std::size_t d, std::uint64_t seed);

class HashEncoder : public EncoderProvider {
 public:
  HashEncoder(std::size_t d, std::uint64_t seed);
  std::size_t dimension() const override { return d_; }
  Vector Encode(const TokenSequence& seq) const override;

 private:
  std::size_t d_;
  std::uint64_t seed_;
};

// Keyed vectors loaded from the plain-text store format:
//   d=<dim>
//   <key>\t<v1> <v2> ... <vd>
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t d = 0) : d_(d) {}

  static EmbeddingStore Load(const std::filesystem::path& path);
  // Values are written with 17 significant digits so a reload is bit-exact.
  void Save(const std::filesystem::path& path) const;

  std::size_t dimension() const { return d_; }
  std::size_t size() const { return rows_.size(); }
  bool contains(const std::string& key) const;
  // Throws DataError on a missing key.
  const Vector& Lookup(const std::string& key) const;
  // Throws NumericError on a dimension mismatch. Insertion order is kept.
  void Insert(const std::string& key, Vector v);
  const std::vector<std::string>& keys() const { return order_; }

 private:
  std::size_t d_;
  std::unordered_map<std::string, Vector> rows_;
  std::vector<std::string> order_;
};

// Looks sequences up by their rendered text, or entities by raw id.
class FileStoreEncoder : public EncoderProvider {
 public:
  explicit FileStoreEncoder(EmbeddingStore store) : store_(std::move(store)) {}
  std::size_t dimension() const override { return store_.dimension(); }
  Vector Encode(const TokenSequence& seq) const override;
  Vector EncodeKey(const std::string& key) const;
  const EmbeddingStore& store() const { return store_; }

 private:
  EmbeddingStore store_;
};

struct RemoteEncoderConfig {
  std::string endpoint;  // KGLAB_API_BASE
  std::string api_key;   // KGLAB_API_KEY
  std::string model = "text-embedding-3-small";
  std::size_t dimension = 0;
  std::size_t batch_size = 16;
  std::size_t max_in_flight = 4;
  std::chrono::milliseconds timeout{30000};
  std::chrono::milliseconds min_request_interval{100};
  RetryPolicy retry;

  // Fills endpoint and api_key from the environment when empty.
  static RemoteEncoderConfig FromEnvironment();
  void Validate() const;
};

// Calls an embeddings endpoint: request {"input": [...], "model": m},
// response {"data": [{"index": i, "embedding": [...]}]}.
class RemoteEncoder : public EncoderProvider {
 public:
  explicit RemoteEncoder(RemoteEncoderConfig cfg);
  RemoteEncoder(RemoteEncoderConfig cfg,
                std::shared_ptr<HttpTransport> transport);

  std::size_t dimension() const override { return cfg_.dimension; }
  bool deterministic() const override { return false; }
  Vector Encode(const TokenSequence& seq) const override;
  std::vector<Vector> EncodeBatch(
      std::span<const TokenSequence> seqs) const override;
  std::vector<Vector> EncodeTexts(const std::vector<std::string>& texts) const;

  const RequestStats& stats() const { return *stats_; }

 private:
  std::vector<Vector> SendBatch(const std::vector<std::string>& texts) const;

  RemoteEncoderConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
  std::unique_ptr<RateLimiter> limiter_;
  std::unique_ptr<RequestStats> stats_;
};

// Token-level conditional distribution used for generation scoring:
// p(next | context, prefix) over a fixed vocabulary.
class LogProbProvider {
 public:
  virtual ~LogProbProvider() = default;
  virtual const std::vector<std::string>& vocabulary() const = 0;
  // Log-probabilities aligned with vocabulary(); exp sums to 1.
  virtual std::vector<double> NextTokenLogProbs(
      std::span<const std::string> context,
      std::span<const std::string> prefix) const = 0;
  // Index into vocabulary(), or -1.
  std::ptrdiff_t IndexOf(const std::string& token) const;

 protected:
  void IndexVocabulary();

 private:
  std::unordered_map<std::string, std::ptrdiff_t> index_;
};

class UniformLogProbProvider : public LogProbProvider {
 public:
  explicit UniformLogProbProvider(std::vector<std::string> vocab);
  const std::vector<std::string>& vocabulary() const override { return vocab_; }
  std::vector<double> NextTokenLogProbs(
      std::span<const std::string> context,
      std::span<const std::string> prefix) const override;

 private:
  std::vector<std::string> vocab_;
};

// Count-based conditional model with Dirichlet backoff:
//   p(x | ctx, prev) <- p(x | prev) <- p(x).
// Fit on (context, target) pairs; memorizes seen contexts and smooths the
// rest, so every distribution is strictly positive and sums to one.
class CountLogProbProvider : public LogProbProvider {
 public:
  struct Options {
    double unigram_prior = 0.1;
    double bigram_strength = 1.0;
    double context_strength = 0.5;
  };

  CountLogProbProvider(std::vector<std::string> vocab, Options opts);

  void Observe(std::span<const std::string> context,
               std::span<const std::string> target);

  const std::vector<std::string>& vocabulary() const override { return vocab_; }
  std::vector<double> NextTokenLogProbs(
      std::span<const std::string> context,
      std::span<const std::string> prefix) const override;

 private:
  using Counts = std::map<std::ptrdiff_t, double>;
  static std::string ContextKey(std::span<const std::string> context);

  std::vector<std::string> vocab_;
  Options opts_;
  std::vector<double> unigram_;
  double unigram_total_ = 0;
  std::map<std::ptrdiff_t, Counts> bigram_;
  std::map<std::pair<std::string, std::ptrdiff_t>, Counts> contextual_;
};

}  // namespace kglab

#endif  // KGLAB_ENCODERS_H_
