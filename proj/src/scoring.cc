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

#include "kglab/scoring.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace kglab {
namespace {

Matrix GaussianMatrix(std::size_t rows, std::size_t cols, double scale,
                      std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

template <typename Fn, typename Params>
void VisitTensors(Params& p, Fn&& fn) {
  for (auto* m : {&p.entity_table, &p.relation_table, &p.query_projection,
                  &p.tail_projection, &p.context_projection}) {
    fn(std::span(m->data(), static_cast<std::size_t>(m->size())));
  }
  fn(std::span(p.classifier_weights.data(),
               static_cast<std::size_t>(p.classifier_weights.size())));
  fn(std::span(&p.classifier_bias, 1));
}

}  // namespace

ModelParameters ModelParameters::Initialize(std::size_t num_entities,
                                            std::size_t num_relations,
                                            std::size_t d, double init_scale,
                                            bool with_projections,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParameters p;
  p.entity_table = GaussianMatrix(num_entities, d, init_scale, rng);
  p.relation_table = GaussianMatrix(num_relations, d, init_scale, rng);
  if (with_projections) {
    p.query_projection = Matrix::Identity(d, d);
    p.tail_projection = Matrix::Identity(d, d);
  }
  p.classifier_weights = Vector::Zero(static_cast<Eigen::Index>(d));
  return p;
}

bool ModelParameters::AllFinite() const {
  bool ok = true;
  ForEachTensor([&](std::span<const double> t) {
    for (double x : t) ok = ok && std::isfinite(x);
  });
  return ok && std::isfinite(temperature);
}

void ModelParameters::CheckSameShape(const ModelParameters& other) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols();
  };
  if (!same(entity_table, other.entity_table) ||
      !same(relation_table, other.relation_table) ||
      !same(query_projection, other.query_projection) ||
      !same(tail_projection, other.tail_projection) ||
      !same(context_projection, other.context_projection) ||
      !same(classifier_weights, other.classifier_weights)) {
    throw NumericError("parameter shapes differ");
  }
}

void ModelParameters::ForEachTensor(
    const std::function<void(std::span<double>)>& fn) {
  VisitTensors(*this, fn);
}

void ModelParameters::ForEachTensor(
    const std::function<void(std::span<const double>)>& fn) const {
  VisitTensors(*this, [&](auto s) {
    fn(std::span<const double>(s.data(), s.size()));
  });
}

Vector LogSoftmax(const Vector& logits) {
  if (logits.size() == 0) return logits;
  if (!logits.allFinite()) throw NumericError("non-finite logits");
  const double max = logits.maxCoeff();
  const double lse = max + std::log((logits.array() - max).exp().sum());
  return (logits.array() - lse).matrix();
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double ScoreJointFeatures(const ModelParameters& params,
                          const Vector& features) {
  if (features.size() != params.classifier_weights.size()) {
    throw NumericError("joint features do not match classifier dimension");
  }
  return Sigmoid(params.classifier_weights.dot(features) +
                 params.classifier_bias);
}

double ScoreJoint(const ModelParameters& params, const EncoderProvider& provider,
                  const KnowledgeGraph& kg, const Triple& triple,
                  const SerializeConfig& cfg) {
  return ScoreJointFeatures(
      params, provider.Encode(EncodeJointTriple(kg, triple, cfg)));
}

double ScoreTwoTower(const Vector& hr, const Vector& tail) {
  if (hr.size() != tail.size()) {
    throw NumericError("two-tower embeddings differ in dimension");
  }
  const double nh = hr.norm();
  const double nt = tail.norm();
  if (nh == 0.0 || nt == 0.0) {
    throw NumericError("cosine of a zero embedding is undefined");
  }
  return std::clamp(hr.dot(tail) / (nh * nt), -1.0, 1.0);
}

Vector ProjectContext(const ModelParameters& params, const Vector& context) {
  if (params.context_projection.size() == 0) return context;
  return params.context_projection * context;
}

Vector ScoreMaskedEntity(const ModelParameters& params, const Vector& context,
                         std::span<const EntityId> candidates) {
  if (candidates.empty()) throw DataError("candidate set is empty");
  const Vector ctx = ProjectContext(params, context);
  if (ctx.size() != params.entity_table.cols()) {
    throw NumericError("context dimension does not match entity table");
  }
  Vector logits(static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const EntityId id = candidates[j];
    if (id < 0 || id >= params.entity_table.rows()) {
      throw DataError("unknown candidate entity id " + std::to_string(id));
    }
    logits[static_cast<Eigen::Index>(j)] = params.entity_table.row(id).dot(ctx);
  }
  return LogSoftmax(logits);
}

double ScoreGeneration(const LogProbProvider& lp,
                       std::span<const std::string> context,
                       std::span<const std::string> target) {
  if (target.empty()) throw DataError("generation target is empty");
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::ptrdiff_t idx = lp.IndexOf(target[i]);
    if (idx < 0) {
      throw DataError("target token outside vocabulary: " + target[i]);
    }
    total += lp.NextTokenLogProbs(context, target.subspan(0, i))[idx];
  }
  return total;
}

EntityTrie::EntityTrie() : nodes_(1) {}

void EntityTrie::Insert(EntityId id, const std::vector<std::string>& tokens) {
  if (tokens.empty()) {
    throw DataError("entity " + std::to_string(id) + " has an empty name");
  }
  if (paths_.contains(id)) {
    throw DataError("entity " + std::to_string(id) + " inserted twice");
  }
  std::size_t cur = 0;
  for (const auto& tok : tokens) {
    auto it = nodes_[cur].children.find(tok);
    if (it == nodes_[cur].children.end()) {
      nodes_.emplace_back();
      it = nodes_[cur].children.emplace(tok, nodes_.size() - 1).first;
    }
    cur = it->second;
  }
  auto& terms = nodes_[cur].terminals;
  terms.insert(std::lower_bound(terms.begin(), terms.end(), id), id);
  paths_.emplace(id, tokens);
}

EntityTrie EntityTrie::FromGraph(const KnowledgeGraph& kg,
                                 const SerializeConfig& cfg) {
  EntityTrie trie;
  for (const Entity& e : kg.entities()) {
    trie.Insert(e.id, EntityNameTokens(kg, e.id, cfg));
  }
  return trie;
}

EntityTrie EntityTrie::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trie file: " + path.string());
  EntityTrie trie;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected id<TAB>tokens");
    }
    std::istringstream ts(line.substr(tab + 1));
    std::vector<std::string> tokens;
    for (std::string t; ts >> t;) tokens.push_back(t);
    trie.Insert(static_cast<EntityId>(std::stol(line.substr(0, tab))), tokens);
  }
  return trie;
}

void EntityTrie::Save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write trie file: " + path.string());
  for (const auto& [id, tokens] : paths_) {
    out << id << '\t';
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i > 0) out << ' ';
      out << tokens[i];
    }
    out << '\n';
  }
}

void SortScored(std::vector<ScoredEntity>& items) {
  std::sort(items.begin(), items.end(),
            [](const ScoredEntity& a, const ScoredEntity& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.entity < b.entity;
            });
}

std::vector<ScoredEntity> DecodeConstrained(const LogProbProvider& lp,
                                            std::span<const std::string> context,
                                            const EntityTrie& trie,
                                            std::size_t beam) {
  if (beam == 0) throw ConfigError("beam must be at least 1");
  if (trie.num_entities() == 0) throw DataError("entity trie is empty");
  struct Hyp {
    std::size_t node;
    std::vector<std::string> tokens;
    double score;
  };
  std::vector<Hyp> live{{trie.root(), {}, 0.0}};
  std::vector<ScoredEntity> finished;
  while (!live.empty()) {
    std::vector<Hyp> expanded;
    for (const Hyp& h : live) {
      const auto& children = trie.node(h.node).children;
      if (children.empty()) continue;
      const std::vector<double> lps = lp.NextTokenLogProbs(context, h.tokens);
      for (const auto& [tok, child] : children) {
        const std::ptrdiff_t idx = lp.IndexOf(tok);
        if (idx < 0) throw DataError("trie token outside vocabulary: " + tok);
        Hyp next{child, h.tokens, h.score + lps[idx]};
        next.tokens.push_back(tok);
        expanded.push_back(std::move(next));
      }
    }
    std::sort(expanded.begin(), expanded.end(),
              [](const Hyp& a, const Hyp& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.tokens < b.tokens;
              });
    if (expanded.size() > beam) expanded.resize(beam);
    live.clear();
    for (Hyp& h : expanded) {
      for (EntityId id : trie.node(h.node).terminals) {
        finished.push_back({id, h.score});
      }
      if (!trie.node(h.node).children.empty()) live.push_back(std::move(h));
    }
  }
  SortScored(finished);
  if (finished.size() > beam) finished.resize(beam);
  return finished;
}

}  // namespace kglab
