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

#include <cmath>
#include <set>

#include "kglab/encoders.h"

namespace kglab {
namespace {

std::vector<std::string> Dedupe(std::vector<std::string> vocab) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (auto& w : vocab) {
    if (seen.insert(w).second) out.push_back(std::move(w));
  }
  if (out.empty()) throw ConfigError("log-prob vocabulary is empty");
  return out;
}

double Total(const std::map<std::ptrdiff_t, double>& counts) {
  double t = 0;
  for (const auto& [_, c] : counts) t += c;
  return t;
}

}  // namespace

std::ptrdiff_t LogProbProvider::IndexOf(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

void LogProbProvider::IndexVocabulary() {
  index_.clear();
  const auto& vocab = vocabulary();
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    index_.emplace(vocab[i], static_cast<std::ptrdiff_t>(i));
  }
}

UniformLogProbProvider::UniformLogProbProvider(std::vector<std::string> vocab)
    : vocab_(Dedupe(std::move(vocab))) {
  IndexVocabulary();
}

std::vector<double> UniformLogProbProvider::NextTokenLogProbs(
    std::span<const std::string>, std::span<const std::string>) const {
  return std::vector<double>(vocab_.size(),
                             -std::log(static_cast<double>(vocab_.size())));
}

CountLogProbProvider::CountLogProbProvider(std::vector<std::string> vocab,
                                           Options opts)
    : vocab_(Dedupe(std::move(vocab))), opts_(opts) {
  if (opts_.unigram_prior <= 0 || opts_.bigram_strength <= 0 ||
      opts_.context_strength <= 0) {
    throw ConfigError("count model smoothing strengths must be positive");
  }
  IndexVocabulary();
  unigram_.assign(vocab_.size(), 0.0);
}

std::string CountLogProbProvider::ContextKey(
    std::span<const std::string> context) {
  std::string key;
  for (const auto& t : context) {
    key += t;
    key.push_back('\x1f');
  }
  return key;
}

void CountLogProbProvider::Observe(std::span<const std::string> context,
                                   std::span<const std::string> target) {
  const std::string key = ContextKey(context);
  std::ptrdiff_t prev = -1;
  for (const auto& tok : target) {
    const std::ptrdiff_t idx = IndexOf(tok);
    if (idx < 0) throw DataError("token outside vocabulary: " + tok);
    unigram_[idx] += 1;
    unigram_total_ += 1;
    bigram_[prev][idx] += 1;
    contextual_[{key, prev}][idx] += 1;
    prev = idx;
  }
}

std::vector<double> CountLogProbProvider::NextTokenLogProbs(
    std::span<const std::string> context,
    std::span<const std::string> prefix) const {
  const std::size_t v = vocab_.size();
  const std::ptrdiff_t prev = prefix.empty() ? -1 : IndexOf(prefix.back());
  // OOV previous tokens fall through to empty bigram and context counts.
  const std::ptrdiff_t prev_key = prefix.empty() ? -1 : (prev < 0 ? -2 : prev);

  std::vector<double> p(v);
  const double denom1 = unigram_total_ + opts_.unigram_prior * v;
  for (std::size_t i = 0; i < v; ++i) {
    p[i] = (unigram_[i] + opts_.unigram_prior) / denom1;
  }
  auto blend = [&](const Counts* counts, double strength) {
    if (!counts) return;
    const double total = Total(*counts);
    for (std::size_t i = 0; i < v; ++i) p[i] *= strength;
    for (const auto& [idx, c] : *counts) p[idx] += c;
    for (std::size_t i = 0; i < v; ++i) p[i] /= (total + strength);
  };
  auto b = bigram_.find(prev_key);
  blend(b == bigram_.end() ? nullptr : &b->second, opts_.bigram_strength);
  auto c = contextual_.find({ContextKey(context), prev_key});
  blend(c == contextual_.end() ? nullptr : &c->second, opts_.context_strength);
  for (double& x : p) x = std::log(x);
  return p;
}

}  // namespace kglab
