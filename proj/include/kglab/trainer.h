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

#ifndef KGLAB_TRAINER_H_
#define KGLAB_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "kglab/eval.h"
#include "kglab/models.h"
#include "kglab/training.h"

namespace kglab {

struct LogRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  std::vector<std::pair<std::string, double>> metrics;
  double wall_time = 0.0;  // seconds since the Unix epoch

  std::string ToJson() const;
};

struct TrainingState {
  ModelParameters params;
  ModelParameters ema_shadow;
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;
  double best_valid_metric = -std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improvement = 0;
  std::vector<double> valid_history;
  std::string rng_state;
  bool stopped_early = false;

  // EMA shadow when EMA is on, raw parameters otherwise.
  const ModelParameters& EvalParameters(const TrainerConfig& cfg) const;
};

struct FitOptions {
  std::function<void(const LogRecord&)> log_sink;
  bool train_head_queries = true;
  std::size_t eval_threads = 1;
};

// Epoch loop: shuffled batches of training_step with SGD, EMA after every
// step, evaluate_step on the valid split (filtered hits@1, both directions)
// and early stopping. fast_run caps each epoch at 5 batches and the run at 2
// epochs. A resumed state continues its epoch, step and RNG.
TrainingState Fit(const TrainerConfig& cfg, KgeModel& model,
                  const FitOptions& options = {},
                  std::optional<TrainingState> resume = std::nullopt);

// Filtered hits@1 of `params` on a split, both directions.
double EvaluateStep(const KgeModel& model, const ModelParameters& params,
                    std::span<const Triple> triples, std::size_t threads = 1);

// Checkpoint directory layout:
//   header.json       scalar config and loop counters
//   entities.emb      entity table of the evaluation parameters
//   params.emb        remaining tensors of the evaluation parameters
//   raw_entities.emb  raw parameters (resume), only when EMA is on
//   raw_params.emb
void SaveCheckpoint(const std::filesystem::path& dir, const TrainingState& state,
                    const TrainerConfig& cfg, ModelKind kind,
                    const KnowledgeGraph& kg,
                    const nlohmann::ordered_json& extra = {});

struct Checkpoint {
  TrainingState state;
  nlohmann::ordered_json header;
  ModelKind kind = ModelKind::kMaskedEntity;
  // Parameters to evaluate with (what entities.emb / params.emb hold).
  ModelParameters eval_params;
};

Checkpoint LoadCheckpoint(const std::filesystem::path& dir,
                          const KnowledgeGraph& kg);

}  // namespace kglab

#endif  // KGLAB_TRAINER_H_
