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

#ifndef KGLAB_TRAINING_H_
#define KGLAB_TRAINING_H_

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "kglab/common.h"
#include "kglab/scoring.h"

namespace kglab {

struct TrainerConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double label_smoothing = 0.1;
  double ema_decay = 0.999;  // 0 disables EMA
  std::size_t patience = 3;
  double min_delta = 1e-4;
  std::size_t negatives_k = 32;
  double temperature = 0.05;
  bool fast_run = false;
  std::uint64_t seed = 0;

  void Validate() const;
};

// Sparse gradient: touched entity rows plus dense small tensors. Empty
// matrices mean "no gradient for this tensor".
struct Gradients {
  std::map<EntityId, Vector> entity_rows;
  Matrix context_projection;
  Matrix query_projection;
  Matrix tail_projection;
  Vector classifier_weights;
  double classifier_bias = 0.0;

  // p <- p - lr * grad
  void ApplySgd(ModelParameters& params, double learning_rate) const;
};

struct StepResult {
  double loss = 0.0;
  Gradients grad;
};

struct SmoothedCrossEntropy {
  double loss = 0.0;
  Vector grad_logits;  // softmax(logits) - q
};

// -sum_j q_j log softmax(logits)_j with q_target = 1 - eps + eps/K and
// q_other = eps/K.
SmoothedCrossEntropy CrossEntropySmoothed(const Vector& logits,
                                          std::size_t target, double epsilon);

struct MaskedEntityExample {
  Vector context;  // frozen-encoder output for the masked query
  EntityId gold = 0;
  std::vector<EntityId> candidates;
};

// Mean smoothed cross-entropy of the masked-entity softmax. Gradients reach
// only the candidate entity rows and, when configured, the context
// projection.
StepResult MaskedEntityStep(const ModelParameters& params,
                            std::span<const MaskedEntityExample> batch,
                            double label_smoothing);

struct ContrastiveExample {
  Vector hr;  // frozen-encoder output for the (h, r) sequence
  EntityId gold = 0;
  std::vector<EntityId> hard_negatives;
};

// In-batch InfoNCE for the two-tower model. Per example the candidates are
// the gold tail, the other examples' gold tails and its hard negatives
// (deduplicated, gold first); logits are projected cosines over
// params.temperature. Gradients reach only the two projections.
// `tail_embeddings` holds the frozen tail-tower encoding of every entity.
StepResult InfoNceStep(const ModelParameters& params,
                       std::span<const ContrastiveExample> batch,
                       const Matrix& tail_embeddings, double label_smoothing);

// Candidate list InfoNceStep builds for batch[index].
std::vector<EntityId> ContrastiveCandidates(
    std::span<const ContrastiveExample> batch, std::size_t index);

struct JointExample {
  Vector features;  // frozen-encoder output for the joint triple sequence
  double label = 1.0;
};

// Mean binary cross-entropy of the joint triple classifier.
StepResult JointStep(const ModelParameters& params,
                     std::span<const JointExample> batch);

// The k best-scoring pool members after removing known-true answers and the
// gold. Ties break by ascending id. Returns fewer when the pool runs out.
std::vector<EntityId> TopKHardNegatives(
    std::span<const EntityId> pool,
    const std::function<double(EntityId)>& score, EntityId gold,
    const std::set<EntityId>& known_true, std::size_t k);

// shadow <- decay * shadow + (1 - decay) * params, elementwise.
void EmaUpdate(std::span<double> shadow, std::span<const double> params,
               double decay);
void EmaUpdate(ModelParameters& shadow, const ModelParameters& params,
               double decay);

enum class StopDecision { kContinue, kStop };

// Stop once the best metric (higher is better) has gone `patience`
// consecutive evaluations without improving by more than min_delta.
StopDecision EarlyStopCheck(std::span<const double> history,
                            std::size_t patience, double min_delta);

}  // namespace kglab

#endif  // KGLAB_TRAINING_H_
