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

#include "kglab/training.h"

#include <algorithm>
#include <cmath>

namespace kglab {
namespace {

void AddRow(Gradients& g, EntityId id, const Vector& delta) {
  auto it = g.entity_rows.find(id);
  if (it == g.entity_rows.end()) {
    g.entity_rows.emplace(id, delta);
  } else {
    it->second += delta;
  }
}

void AddOuter(Matrix& acc, double scale, const Vector& left,
              const Vector& right) {
  if (acc.size() == 0) acc = Matrix::Zero(left.size(), right.size());
  acc.noalias() += scale * left * right.transpose();
}

double Softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

void TrainerConfig::Validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(label_smoothing >= 0 && label_smoothing < 1)) {
    throw ConfigError("label_smoothing must be in [0, 1)");
  }
  if (!(ema_decay >= 0 && ema_decay < 1)) {
    throw ConfigError("ema_decay must be in [0, 1)");
  }
  if (!(temperature > 0)) throw ConfigError("temperature must be positive");
  if (!(min_delta >= 0)) throw ConfigError("min_delta must be non-negative");
}

void Gradients::ApplySgd(ModelParameters& params, double learning_rate) const {
  for (const auto& [id, row] : entity_rows) {
    params.entity_table.row(id) -= learning_rate * row.transpose();
  }
  auto step = [&](Matrix& p, const Matrix& g) {
    if (g.size() == 0) return;
    if (p.rows() != g.rows() || p.cols() != g.cols()) {
      throw NumericError("gradient shape does not match parameter");
    }
    p -= learning_rate * g;
  };
  step(params.context_projection, context_projection);
  step(params.query_projection, query_projection);
  step(params.tail_projection, tail_projection);
  if (classifier_weights.size() > 0) {
    params.classifier_weights -= learning_rate * classifier_weights;
  }
  params.classifier_bias -= learning_rate * classifier_bias;
}

SmoothedCrossEntropy CrossEntropySmoothed(const Vector& logits,
                                          std::size_t target, double epsilon) {
  const auto k = static_cast<std::size_t>(logits.size());
  if (k == 0 || target >= k) throw DataError("target outside the logits");
  if (!(epsilon >= 0 && epsilon < 1)) {
    throw ConfigError("label smoothing must be in [0, 1)");
  }
  const Vector log_p = LogSoftmax(logits);
  const double q_other = epsilon / static_cast<double>(k);
  const double q_target = 1.0 - epsilon + q_other;
  SmoothedCrossEntropy out;
  out.grad_logits = log_p.array().exp().matrix();
  for (std::size_t j = 0; j < k; ++j) {
    const double q = j == target ? q_target : q_other;
    const auto jj = static_cast<Eigen::Index>(j);
    if (q != 0.0) out.loss -= q * log_p[jj];
    out.grad_logits[jj] -= q;
  }
  return out;
}

StepResult MaskedEntityStep(const ModelParameters& params,
                            std::span<const MaskedEntityExample> batch,
                            double label_smoothing) {
  StepResult out;
  if (batch.empty()) return out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool projected = params.context_projection.size() > 0;
  for (const auto& ex : batch) {
    const auto gold_it =
        std::find(ex.candidates.begin(), ex.candidates.end(), ex.gold);
    if (gold_it == ex.candidates.end()) {
      throw DataError("gold entity " + std::to_string(ex.gold) +
                      " missing from candidates");
    }
    const Vector ctx = ProjectContext(params, ex.context);
    Vector logits(static_cast<Eigen::Index>(ex.candidates.size()));
    for (std::size_t j = 0; j < ex.candidates.size(); ++j) {
      logits[static_cast<Eigen::Index>(j)] =
          params.entity_table.row(ex.candidates[j]).dot(ctx);
    }
    const auto ce = CrossEntropySmoothed(
        logits, static_cast<std::size_t>(gold_it - ex.candidates.begin()),
        label_smoothing);
    out.loss += ce.loss * inv_b;
    for (std::size_t j = 0; j < ex.candidates.size(); ++j) {
      const double g = ce.grad_logits[static_cast<Eigen::Index>(j)] * inv_b;
      AddRow(out.grad, ex.candidates[j], g * ctx);
      if (projected) {
        AddOuter(out.grad.context_projection, g,
                 params.entity_table.row(ex.candidates[j]).transpose(),
                 ex.context);
      }
    }
  }
  return out;
}

std::vector<EntityId> ContrastiveCandidates(
    std::span<const ContrastiveExample> batch, std::size_t index) {
  const auto& ex = batch[index];
  std::vector<EntityId> out{ex.gold};
  std::set<EntityId> seen{ex.gold};
  for (const auto& other : batch) {
    if (seen.insert(other.gold).second) out.push_back(other.gold);
  }
  for (EntityId n : ex.hard_negatives) {
    if (seen.insert(n).second) out.push_back(n);
  }
  return out;
}

StepResult InfoNceStep(const ModelParameters& params,
                       std::span<const ContrastiveExample> batch,
                       const Matrix& tail_embeddings, double label_smoothing) {
  StepResult out;
  if (batch.empty()) return out;
  const auto d = tail_embeddings.cols();
  const Matrix pq = params.query_projection.size() > 0
                        ? params.query_projection
                        : Matrix(Matrix::Identity(d, d));
  const Matrix pt = params.tail_projection.size() > 0
                        ? params.tail_projection
                        : Matrix(Matrix::Identity(d, d));
  const double tau = params.temperature;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.grad.query_projection = Matrix::Zero(d, d);
  out.grad.tail_projection = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    const std::vector<EntityId> cands = ContrastiveCandidates(batch, i);
    if (cands.size() < 2) {
      throw DataError("contrastive example needs at least one negative");
    }
    const Vector q = pq * ex.hr;
    const double nq = q.norm();
    if (nq == 0.0) throw NumericError("zero query embedding");
    std::vector<Vector> keys;
    keys.reserve(cands.size());
    Vector logits(static_cast<Eigen::Index>(cands.size()));
    std::vector<double> cosines(cands.size()), knorms(cands.size());
    for (std::size_t c = 0; c < cands.size(); ++c) {
      keys.push_back(pt * tail_embeddings.row(cands[c]).transpose());
      knorms[c] = keys[c].norm();
      if (knorms[c] == 0.0) throw NumericError("zero tail embedding");
      cosines[c] = q.dot(keys[c]) / (nq * knorms[c]);
      logits[static_cast<Eigen::Index>(c)] = cosines[c] / tau;
    }
    const auto ce = CrossEntropySmoothed(logits, 0, label_smoothing);
    out.loss += ce.loss * inv_b;
    Vector dq = Vector::Zero(d);
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const double g = ce.grad_logits[static_cast<Eigen::Index>(c)] / tau * inv_b;
      const Vector& k = keys[c];
      // d cos / dq and d cos / dk for cos = q.k / (|q||k|).
      dq += g * (k / (nq * knorms[c]) - cosines[c] * q / (nq * nq));
      const Vector dk =
          g * (q / (nq * knorms[c]) - cosines[c] * k / (knorms[c] * knorms[c]));
      out.grad.tail_projection.noalias() +=
          dk * tail_embeddings.row(cands[c]);
    }
    out.grad.query_projection.noalias() += dq * ex.hr.transpose();
  }
  return out;
}

StepResult JointStep(const ModelParameters& params,
                     std::span<const JointExample> batch) {
  StepResult out;
  if (batch.empty()) return out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.grad.classifier_weights = Vector::Zero(params.classifier_weights.size());
  for (const auto& ex : batch) {
    const double z =
        params.classifier_weights.dot(ex.features) + params.classifier_bias;
    if (!std::isfinite(z)) throw NumericError("non-finite classifier logit");
    out.loss += (Softplus(z) - ex.label * z) * inv_b;
    const double g = (Sigmoid(z) - ex.label) * inv_b;
    out.grad.classifier_weights += g * ex.features;
    out.grad.classifier_bias += g;
  }
  return out;
}

std::vector<EntityId> TopKHardNegatives(
    std::span<const EntityId> pool,
    const std::function<double(EntityId)>& score, EntityId gold,
    const std::set<EntityId>& known_true, std::size_t k) {
  std::vector<ScoredEntity> scored;
  std::set<EntityId> seen;
  for (EntityId id : pool) {
    if (id == gold || known_true.contains(id) || !seen.insert(id).second) {
      continue;
    }
    scored.push_back({id, score(id)});
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), [](const ScoredEntity& a, const ScoredEntity& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.entity < b.entity;
                    });
  std::vector<EntityId> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(scored[i].entity);
  return out;
}

void EmaUpdate(std::span<double> shadow, std::span<const double> params,
               double decay) {
  if (shadow.size() != params.size()) {
    throw NumericError("EMA shadow and parameters differ in size");
  }
  if (!(decay >= 0 && decay < 1)) throw ConfigError("decay must be in [0, 1)");
  for (std::size_t i = 0; i < shadow.size(); ++i) {
    shadow[i] = decay * shadow[i] + (1.0 - decay) * params[i];
  }
}

void EmaUpdate(ModelParameters& shadow, const ModelParameters& params,
               double decay) {
  shadow.CheckSameShape(params);
  std::vector<std::span<const double>> sources;
  params.ForEachTensor([&](std::span<const double> t) { sources.push_back(t); });
  std::size_t i = 0;
  shadow.ForEachTensor(
      [&](std::span<double> t) { EmaUpdate(t, sources[i++], decay); });
}

StopDecision EarlyStopCheck(std::span<const double> history,
                            std::size_t patience, double min_delta) {
  if (history.empty()) return StopDecision::kContinue;
  double best = history[0];
  std::size_t since = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] > best + min_delta) {
      best = history[i];
      since = 0;
    } else {
      ++since;
    }
  }
  return since >= patience ? StopDecision::kStop : StopDecision::kContinue;
}

}  // namespace kglab
