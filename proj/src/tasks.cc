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

#include "kglab/tasks.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace kglab {
namespace {

const ModelParameters& Params(const MaskedModelView& m) {
  if (m.params == nullptr || m.encoder == nullptr || m.kg == nullptr) {
    throw ConfigError("masked model view is incomplete");
  }
  return *m.params;
}

Vector EncodeObserved(const MaskedModelView& m, const TokenSequence& seq) {
  if (m.observer) m.observer(seq);
  return m.encoder->Encode(seq);
}

std::vector<EntityId> AllIds(std::size_t n) {
  std::vector<EntityId> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

// Every entity except `excluded`, best first, at most top_n.
std::vector<ScoredEntity> RankEntities(const MaskedModelView& m,
                                       const Vector& context,
                                       const std::set<EntityId>& excluded,
                                       std::size_t top_n) {
  const std::vector<EntityId> ids = AllIds(m.kg->num_entities());
  const Vector log_p = ScoreMaskedEntity(Params(m), context, ids);
  std::vector<ScoredEntity> out;
  for (EntityId id : ids) {
    if (excluded.count(id)) continue;
    out.push_back({id, log_p[id]});
  }
  SortScored(out);
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

std::vector<ScoredToken> RankTokens(const ProbeModel& probe, const Vector& ctx,
                                    std::size_t top_n) {
  if (probe.token_table.rows() !=
      static_cast<Eigen::Index>(probe.vocabulary.size())) {
    throw ConfigError("token table rows do not match the vocabulary");
  }
  if (probe.token_table.cols() != ctx.size()) {
    throw NumericError("context dimension does not match token table");
  }
  const Vector log_p = LogSoftmax(probe.token_table * ctx);
  std::vector<ScoredToken> out(probe.vocabulary.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {i, log_p[static_cast<Eigen::Index>(i)]};
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ScoredToken& a, const ScoredToken& b) {
                     return a.score > b.score;
                   });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

Vector Augment(const MaskedModelView& m, const ProbeModel& probe,
               const Vector& base, EntityId entity) {
  const ModelParameters& p = Params(m);
  if (entity < 0 || entity >= p.entity_table.rows()) {
    throw DataError("unknown mention entity " + std::to_string(entity));
  }
  Vector v = base + probe.lambda * p.entity_table.row(entity).transpose();
  const double n = v.norm();
  if (n == 0.0) throw NumericError("augmented context has zero norm");
  return v / n;
}

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename Fn>
void ForEachLine(const std::string& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      fn(SplitTabs(line));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

EntityId EntityByRaw(const KnowledgeGraph& kg, const std::string& raw) {
  auto id = kg.find_entity(raw);
  if (!id) throw DataError("unknown entity '" + raw + "'");
  return *id;
}

std::size_t ParseIndex(const std::string& s) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c);
      })) {
    throw DataError("bad token offset '" + s + "'");
  }
  return static_cast<std::size_t>(std::stoull(s));
}

}  // namespace

std::vector<ScoredEntity> KgcPredict(const MaskedModelView& model,
                                     EntityId known, RelationId relation,
                                     Direction direction, std::size_t top_n,
                                     const FilterIndex* filter,
                                     std::optional<EntityId> gold) {
  Params(model);
  const KnowledgeGraph& kg = *model.kg;
  kg.entity(known);
  kg.relation(relation);
  if (gold) kg.entity(*gold);
  const Vector ctx = EncodeObserved(
      model, EncodeMaskedQuery(kg, known, relation, direction, model.serialize));
  std::set<EntityId> excluded;
  if (filter != nullptr) {
    excluded = filter->answers(known, relation, direction);
    if (gold) excluded.erase(*gold);
  }
  return RankEntities(model, ctx, excluded, top_n);
}

TokenSequence QaSequence(std::string_view question, const SerializeConfig& cfg) {
  std::vector<Token> body = TokenizeMarkup(question, cfg);
  if (body.empty()) throw DataError("question is empty");
  const std::size_t room = cfg.max_len > 4 ? cfg.max_len - 4 : 0;
  if (body.size() > room) body.resize(room);
  TokenSequence seq;
  seq.max_len = cfg.max_len;
  seq.items.push_back(Token::Cls());
  seq.items.insert(seq.items.end(), body.begin(), body.end());
  seq.items.push_back(Token::Sep());
  seq.items.push_back(Token::Mask());
  seq.items.push_back(Token::Sep());
  return seq;
}

std::vector<ScoredEntity> QaAnswer(const MaskedModelView& model,
                                   std::string_view question,
                                   std::size_t top_n) {
  Params(model);
  const Vector ctx = EncodeObserved(model, QaSequence(question, model.serialize));
  return RankEntities(model, ctx, {}, top_n);
}

TokenSequence RecommendationSequence(std::span<const EntityId> items,
                                     const SerializeConfig& cfg) {
  if (items.empty()) throw DataError("interaction history is empty");
  const std::size_t room = cfg.max_len - 3;
  const std::size_t skip = items.size() > room ? items.size() - room : 0;
  TokenSequence seq;
  seq.max_len = cfg.max_len;
  seq.items.push_back(Token::Cls());
  for (std::size_t i = skip; i < items.size(); ++i) {
    seq.items.push_back(Token::OfEntity(items[i]));
  }
  seq.items.push_back(Token::Mask());
  seq.items.push_back(Token::Sep());
  return seq;
}

std::vector<ScoredEntity> RecommendNext(const MaskedModelView& model,
                                        const InteractionHistory& history,
                                        std::size_t top_n) {
  Params(model);
  for (EntityId e : history.items) model.kg->entity(e);
  const Vector ctx = EncodeObserved(
      model, RecommendationSequence(history.items, model.serialize));
  const std::set<EntityId> seen(history.items.begin(), history.items.end());
  return RankEntities(model, ctx, seen, top_n);
}

std::vector<MaskedEntityExample> RecommendationExamples(
    const MaskedModelView& model, std::span<const InteractionHistory> histories) {
  Params(model);
  const std::vector<EntityId> ids = AllIds(model.kg->num_entities());
  std::vector<MaskedEntityExample> out;
  for (const auto& h : histories) {
    for (std::size_t k = 1; k < h.items.size(); ++k) {
      const std::span<const EntityId> prefix(h.items.data(), k);
      out.push_back({EncodeObserved(model, RecommendationSequence(prefix, model.serialize)),
                     h.items[k], ids});
    }
  }
  return out;
}

double FitMaskedExamples(ModelParameters& params,
                         std::span<const MaskedEntityExample> examples,
                         const TrainerConfig& cfg) {
  cfg.Validate();
  if (examples.empty()) throw DataError("no training examples");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  double last = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<MaskedEntityExample> batch;
      for (std::size_t i = start; i < stop; ++i) batch.push_back(examples[order[i]]);
      const StepResult step = MaskedEntityStep(params, batch, cfg.label_smoothing);
      if (!std::isfinite(step.loss)) throw NumericError("non-finite loss");
      step.grad.ApplySgd(params, cfg.learning_rate);
      total += step.loss * static_cast<double>(batch.size());
    }
    last = total / static_cast<double>(examples.size());
  }
  return last;
}

// ---- Probing ----------------------------------------------------------------

void ClozeQuery::Validate() const {
  const auto masks = std::count_if(tokens.begin(), tokens.end(), [](const Token& t) {
    return t.kind == TokenKind::kMask;
  });
  if (masks != 1) {
    throw DataError("cloze query needs exactly one [MASK], found " +
                    std::to_string(masks));
  }
  if (mention && (mention->begin >= mention->end || mention->end > tokens.size())) {
    throw DataError("mention span lies outside the cloze tokens");
  }
}

ClozeQuery ParseCloze(std::string_view text, const SerializeConfig& cfg) {
  ClozeQuery q;
  q.tokens = TokenizeMarkup(text, cfg);
  q.Validate();
  return q;
}

std::optional<std::size_t> ProbeModel::IndexOf(std::string_view token) const {
  const auto it = std::find(vocabulary.begin(), vocabulary.end(), token);
  if (it == vocabulary.end()) return std::nullopt;
  return static_cast<std::size_t>(it - vocabulary.begin());
}

ProbeResult ProbeFact(const MaskedModelView& model, const ProbeModel& probe,
                      const ClozeQuery& query, std::size_t top_n) {
  Params(model);
  query.Validate();
  TokenSequence seq;
  seq.items = query.tokens;
  seq.max_len = model.serialize.max_len;
  const Vector base = EncodeObserved(model, seq);
  ProbeResult out;
  out.base = RankTokens(probe, base, top_n);
  if (query.mention) {
    out.augmented = probe.lambda == 0.0
                        ? out.base
                        : RankTokens(probe, Augment(model, probe, base,
                                                    query.mention->entity),
                                     top_n);
  }
  return out;
}

ProbeReport EvaluateProbe(const MaskedModelView& model, const ProbeModel& probe,
                          std::span<const ProbeExample> examples) {
  if (examples.empty()) throw DataError("no probe examples");
  ProbeReport r;
  auto rank_of = [](const std::vector<ScoredToken>& ranking, std::size_t gold) {
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      if (ranking[i].token == gold) return static_cast<double>(i + 1);
    }
    throw DataError("gold token missing from ranking");
  };
  for (const auto& ex : examples) {
    const auto gold = probe.IndexOf(ex.gold);
    if (!gold) throw DataError("gold token '" + ex.gold + "' not in vocabulary");
    const ProbeResult res = ProbeFact(model, probe, ex.query, probe.vocabulary.size());
    const double base = rank_of(res.base, *gold);
    const double aug = res.augmented ? rank_of(*res.augmented, *gold) : base;
    r.base_hits1 += base == 1.0;
    r.base_mrr += 1.0 / base;
    r.augmented_hits1 += aug == 1.0;
    r.augmented_mrr += 1.0 / aug;
  }
  r.count = examples.size();
  const double n = static_cast<double>(r.count);
  r.base_hits1 /= n;
  r.base_mrr /= n;
  r.augmented_hits1 /= n;
  r.augmented_mrr /= n;
  return r;
}

double FitTokenTable(const MaskedModelView& model, ProbeModel& probe,
                     std::span<const ProbeExample> examples,
                     const TrainerConfig& cfg) {
  Params(model);
  const std::vector<EntityId> ids = AllIds(probe.vocabulary.size());
  std::vector<MaskedEntityExample> train;
  for (const auto& ex : examples) {
    ex.query.Validate();
    const auto gold = probe.IndexOf(ex.gold);
    if (!gold) throw DataError("gold token '" + ex.gold + "' not in vocabulary");
    TokenSequence seq;
    seq.items = ex.query.tokens;
    seq.max_len = model.serialize.max_len;
    train.push_back({EncodeObserved(model, seq), static_cast<EntityId>(*gold), ids});
  }
  ModelParameters tokens;
  tokens.entity_table = probe.token_table;
  const double loss = FitMaskedExamples(tokens, train, cfg);
  probe.token_table = std::move(tokens.entity_table);
  return loss;
}

// ---- Input files ------------------------------------------------------------

std::vector<QaExample> LoadQaFile(const std::string& path,
                                  const KnowledgeGraph& kg) {
  std::vector<QaExample> out;
  ForEachLine(path, [&](const std::vector<std::string>& cols) {
    if (cols.size() != 2) throw DataError("expected 2 columns");
    out.push_back({cols[0], EntityByRaw(kg, cols[1])});
  });
  return out;
}

std::vector<InteractionHistory> LoadInteractions(const std::string& path,
                                                 const KnowledgeGraph& kg) {
  std::vector<InteractionHistory> out;
  ForEachLine(path, [&](const std::vector<std::string>& cols) {
    if (cols.size() != 2) throw DataError("expected 2 columns");
    InteractionHistory h;
    h.user = cols[0];
    std::size_t start = 0;
    while (true) {
      const auto comma = cols[1].find(',', start);
      const std::string item = cols[1].substr(start, comma - start);
      if (item.empty()) throw DataError("empty item in history");
      h.items.push_back(EntityByRaw(kg, item));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    out.push_back(std::move(h));
  });
  return out;
}

std::vector<ProbeExample> LoadProbeFile(const std::string& path,
                                        const KnowledgeGraph& kg,
                                        const SerializeConfig& cfg) {
  std::vector<ProbeExample> out;
  ForEachLine(path, [&](const std::vector<std::string>& cols) {
    if (cols.size() != 2 && cols.size() != 3) {
      throw DataError("expected 2 or 3 columns");
    }
    ProbeExample ex;
    ex.query.tokens = TokenizeMarkup(cols[0], cfg);
    ex.gold = cols[1];
    if (cols.size() == 3) {
      const auto last = cols[2].rfind(':');
      const auto mid = last == std::string::npos || last == 0
                           ? std::string::npos
                           : cols[2].rfind(':', last - 1);
      if (mid == std::string::npos) {
        throw DataError("mention must be entity:start:end");
      }
      EntityMention m;
      m.entity = EntityByRaw(kg, cols[2].substr(0, mid));
      m.begin = ParseIndex(cols[2].substr(mid + 1, last - mid - 1));
      m.end = ParseIndex(cols[2].substr(last + 1));
      ex.query.mention = m;
    }
    ex.query.Validate();
    out.push_back(std::move(ex));
  });
  return out;
}

}  // namespace kglab
