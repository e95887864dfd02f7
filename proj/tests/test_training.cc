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
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "kglab/models.h"
#include "kglab/trainer.h"
#include "kglab/training.h"
#include "testing.h"

namespace kglab {
namespace {

Vector RandomVector(std::mt19937_64& rng, int d, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = g(rng);
  return v;
}

Matrix RandomMatrix(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = g(rng);
  }
  return m;
}

// Norm-wise relative error of an analytic gradient against central
// differences of `loss` over every entry of `param`.
double FiniteDifferenceError(Matrix& param, const Matrix& analytic,
                             const std::function<double()>& loss) {
  const double h = 1e-4;
  Matrix numeric = Matrix::Zero(param.rows(), param.cols());
  for (Eigen::Index i = 0; i < param.rows(); ++i) {
    for (Eigen::Index j = 0; j < param.cols(); ++j) {
      const double keep = param(i, j);
      param(i, j) = keep + h;
      const double up = loss();
      param(i, j) = keep - h;
      const double down = loss();
      param(i, j) = keep;
      numeric(i, j) = (up - down) / (2 * h);
    }
  }
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
  return (analytic - numeric).norm() / scale;
}

Matrix DenseEntityGrad(const Gradients& g, Eigen::Index rows, Eigen::Index cols) {
  Matrix out = Matrix::Zero(rows, cols);
  for (const auto& [id, row] : g.entity_rows) out.row(id) = row.transpose();
  return out;
}

TEST_CASE("smoothed cross-entropy") {
  auto logits = [](double a, double b) { return (Vector(2) << a, b).finished(); };
  CHECK(std::abs(CrossEntropySmoothed(logits(0, 0), 0, 0.0).loss - std::log(2.0)) < 1e-12);
  CHECK(std::abs(CrossEntropySmoothed(logits(0, 0), 0, 0.1).loss - std::log(2.0)) < 1e-12);
  CHECK(std::abs(CrossEntropySmoothed(logits(2, 0), 0, 0.0).loss -
                 std::log1p(std::exp(-2.0))) < 1e-12);
  CHECK(std::abs(CrossEntropySmoothed(logits(2, 0), 0, 0.0).loss - 0.126928) < 1e-6);
  CHECK_THROWS_AS(CrossEntropySmoothed(logits(NAN, 0), 0, 0.0), NumericError);
  CHECK_THROWS_AS(CrossEntropySmoothed(logits(0, 0), 0, 1.0), ConfigError);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector z = RandomVector(rng, 7, 2.0);
    // Plain cross-entropy, written out independently.
    double m = z.maxCoeff();
    double s = 0.0;
    for (int j = 0; j < 7; ++j) s += std::exp(z[j] - m);
    const double plain = -(z[3] - m - std::log(s));
    CHECK(std::abs(CrossEntropySmoothed(z, 3, 0.0).loss - plain) < 1e-12);
    // Entropy floor of the smoothed target.
    const double eps = 0.2;
    const double qt = 1 - eps + eps / 7;
    const double qo = eps / 7;
    const double floor = -(qt * std::log(qt) + 6 * qo * std::log(qo));
    CHECK(CrossEntropySmoothed(z, 3, eps).loss >= floor - 1e-12);
  }
}

TEST_CASE("masked-entity step closed forms") {
  ModelParameters p;
  p.entity_table = Matrix::Zero(3, 2);
  p.entity_table.row(0) << 0.5, 0.5;
  p.entity_table.row(1) << 0.5, 0.5;
  const Vector ctx = (Vector(2) << 1.0, -2.0).finished();
  MaskedEntityExample ex{ctx, 0, {0, 1}};
  const StepResult one = MaskedEntityStep(p, std::vector{ex}, 0.0);
  CHECK((one.grad.entity_rows.at(0) - (-0.5 * ctx)).norm() < 1e-12);
  CHECK((one.grad.entity_rows.at(1) - (0.5 * ctx)).norm() < 1e-12);
  CHECK(one.grad.entity_rows.count(2) == 0);

  const StepResult dup = MaskedEntityStep(p, std::vector{ex, ex, ex}, 0.0);
  CHECK(std::abs(dup.loss - one.loss) < 1e-12);
  CHECK((dup.grad.entity_rows.at(0) - one.grad.entity_rows.at(0)).norm() < 1e-12);

  MaskedEntityExample missing{ctx, 2, {0, 1}};
  CHECK_THROWS_AS(MaskedEntityStep(p, std::vector{missing}, 0.0), DataError);
}

TEST_CASE("masked-entity gradients match finite differences") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 4;
    ModelParameters p;
    p.entity_table = RandomMatrix(rng, 8, d);
    const bool projected = trial % 2 == 1;
    if (projected) p.context_projection = RandomMatrix(rng, d, d, 0.5);
    std::vector<MaskedEntityExample> batch;
    for (int b = 0; b < 3; ++b) {
      std::vector<EntityId> cands = {0, 1, 2, 3, 4, 5, 6, 7};
      std::shuffle(cands.begin(), cands.end(), rng);
      cands.resize(5);
      batch.push_back({RandomVector(rng, d), cands[static_cast<std::size_t>(b)], cands});
    }
    const double eps = trial % 3 == 0 ? 0.0 : 0.1;
    const StepResult step = MaskedEntityStep(p, batch, eps);
    auto loss = [&] { return MaskedEntityStep(p, batch, eps).loss; };
    CHECK(FiniteDifferenceError(p.entity_table, DenseEntityGrad(step.grad, 8, d), loss) < 1e-5);
    if (projected) {
      CHECK(FiniteDifferenceError(p.context_projection, step.grad.context_projection, loss) < 1e-5);
    }
  }
}

TEST_CASE("InfoNCE closed form and symmetry") {
  ModelParameters p;
  p.query_projection = Matrix::Identity(2, 2);
  p.tail_projection = Matrix::Identity(2, 2);
  p.temperature = 1.0;
  Matrix tails(2, 2);
  tails << 1, 0, 0, 1;
  ContrastiveExample ex{(Vector(2) << 1, 0).finished(), 0, {1}};
  const StepResult r = InfoNceStep(p, std::vector{ex}, tails, 0.0);
  CHECK(std::abs(r.loss - std::log1p(std::exp(-1.0))) < 1e-12);
  CHECK(std::abs(r.loss - 0.313262) < 1e-6);
  CHECK(r.grad.entity_rows.empty());

  std::vector<ContrastiveExample> pair = {{(Vector(2) << 1, 0).finished(), 0, {}},
                                          {(Vector(2) << 0, 1).finished(), 1, {}}};
  const double both = InfoNceStep(p, pair, tails, 0.0).loss;
  const double first = InfoNceStep(p, std::vector{pair[0], pair[1]}, tails, 0.0).loss;
  CHECK(std::abs(both - first) < 1e-15);
  CHECK(ContrastiveCandidates(pair, 0) == std::vector<EntityId>{0, 1});
  CHECK(ContrastiveCandidates(pair, 1) == std::vector<EntityId>{1, 0});
  // Per-example losses are equal, so each equals the batch mean.
  ModelParameters half = p;
  const double single = InfoNceStep(half, std::vector{ContrastiveExample{pair[0].hr, 0, {1}}},
                                    tails, 0.0).loss;
  CHECK(std::abs(single - both) < 1e-12);

  ContrastiveExample zero{Vector::Zero(2), 0, {1}};
  CHECK_THROWS_AS(InfoNceStep(p, std::vector{zero}, tails, 0.0), NumericError);
}

TEST_CASE("InfoNCE projection gradients match finite differences") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 4;
    ModelParameters p;
    p.query_projection = Matrix::Identity(d, d) + RandomMatrix(rng, d, d, 0.3);
    p.tail_projection = Matrix::Identity(d, d) + RandomMatrix(rng, d, d, 0.3);
    p.temperature = 0.5;
    const Matrix tails = RandomMatrix(rng, 10, d);
    std::vector<ContrastiveExample> batch;
    for (int b = 0; b < 3; ++b) {
      batch.push_back({RandomVector(rng, d), static_cast<EntityId>(b),
                       {static_cast<EntityId>(5 + b), static_cast<EntityId>(8)}});
    }
    const double eps = trial % 2 == 0 ? 0.0 : 0.1;
    const StepResult step = InfoNceStep(p, batch, tails, eps);
    auto loss = [&] { return InfoNceStep(p, batch, tails, eps).loss; };
    CHECK(FiniteDifferenceError(p.query_projection, step.grad.query_projection, loss) < 1e-4);
    CHECK(FiniteDifferenceError(p.tail_projection, step.grad.tail_projection, loss) < 1e-4);
  }
}

TEST_CASE("joint BCE gradients match finite differences") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    ModelParameters p;
    p.classifier_weights = RandomVector(rng, 5);
    p.classifier_bias = 0.2;
    std::vector<JointExample> batch = {{RandomVector(rng, 5), 1.0},
                                       {RandomVector(rng, 5), 0.0},
                                       {RandomVector(rng, 5), 0.0}};
    const StepResult step = JointStep(p, batch);
    Matrix w = p.classifier_weights;
    auto loss = [&] {
      ModelParameters q = p;
      q.classifier_weights = w;
      return JointStep(q, batch).loss;
    };
    CHECK(FiniteDifferenceError(w, step.grad.classifier_weights, loss) < 1e-5);
    const double h = 1e-4;
    ModelParameters up = p;
    up.classifier_bias += h;
    ModelParameters down = p;
    down.classifier_bias -= h;
    const double numeric = (JointStep(up, batch).loss - JointStep(down, batch).loss) / (2 * h);
    CHECK(std::abs(numeric - step.grad.classifier_bias) < 1e-7);
  }
}

TEST_CASE("top-k hard negatives") {
  const std::vector<double> s = {0.7, 0.9, 0.5, 0.1};
  const std::vector<EntityId> pool = {0, 1, 2, 3};
  auto score = [&](EntityId e) { return s[static_cast<std::size_t>(e)]; };
  CHECK(TopKHardNegatives(pool, score, 0, {}, 2) == std::vector<EntityId>{1, 2});
  CHECK(TopKHardNegatives(pool, score, 0, {1}, 2) == std::vector<EntityId>{2, 3});
  CHECK(TopKHardNegatives(pool, score, 0, {1}, 10) == std::vector<EntityId>{2, 3});

  const KnowledgeGraph kg = testing::RandomKg(50, 5, 300, 2);
  const FilterIndex filter(kg);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> bucket(0, 9);
  std::vector<EntityId> all(50);
  std::iota(all.begin(), all.end(), 0);
  for (const Triple& t : kg.train()) {
    std::vector<double> scores(50);
    for (double& v : scores) v = bucket(rng) / 10.0;  // frequent ties
    auto sc = [&](EntityId e) { return scores[static_cast<std::size_t>(e)]; };
    const auto& known = filter.tails(t.head, t.relation);
    const auto got = TopKHardNegatives(all, sc, t.tail, known, 7);
    std::vector<std::pair<double, EntityId>> brute;
    for (EntityId e = 0; e < 50; ++e) {
      if (e != t.tail && !known.count(e)) brute.push_back({-scores[static_cast<std::size_t>(e)], e});
    }
    std::sort(brute.begin(), brute.end());
    std::vector<EntityId> expect;
    for (std::size_t i = 0; i < std::min<std::size_t>(7, brute.size()); ++i) {
      expect.push_back(brute[i].second);
    }
    CHECK(got == expect);
  }
}

TEST_CASE("EMA") {
  std::vector<double> shadow = {0.0};
  const std::vector<double> one = {1.0};
  EmaUpdate(shadow, one, 0.9);
  CHECK(std::abs(shadow[0] - 0.1) < 1e-15);
  EmaUpdate(shadow, one, 0.0);
  CHECK(shadow[0] == 1.0);

  std::vector<double> e = {3.0, -2.0, 0.5};
  const std::vector<double> p = {1.0, 4.0, 0.5};
  const std::vector<double> e0 = e;
  const double decay = 0.8;
  for (int n = 1; n <= 10; ++n) {
    EmaUpdate(e, p, decay);
    for (std::size_t i = 0; i < e.size(); ++i) {
      CHECK(std::abs(e[i] - (p[i] + (e0[i] - p[i]) * std::pow(decay, n))) < 1e-12);
    }
  }
  std::vector<double> shorter = {1.0};
  CHECK_THROWS_AS(EmaUpdate(shorter, p, 0.5), NumericError);
}

// Stop iff the last record (a value beating the previous record by more than
// min_delta; the first value is a record) is `patience` or more evaluations
// old.
StopDecision ReferenceStop(const std::vector<double>& h, std::size_t patience,
                           double min_delta) {
  std::vector<std::size_t> records = {0};
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (h[i] - h[records.back()] > min_delta) records.push_back(i);
  }
  return h.size() - 1 - records.back() >= patience ? StopDecision::kStop
                                                   : StopDecision::kContinue;
}

TEST_CASE("early stopping") {
  using V = std::vector<double>;
  CHECK(EarlyStopCheck(V{0.1, 0.2, 0.3}, 3, 1e-4) == StopDecision::kContinue);
  CHECK(EarlyStopCheck(V{0.3, 0.3, 0.3, 0.3}, 3, 1e-4) == StopDecision::kStop);
  CHECK(EarlyStopCheck(V{0.3, 0.31, 0.3, 0.3}, 2, 1e-4) == StopDecision::kStop);

  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> len(1, 12);
  std::uniform_int_distribution<int> val(0, 20);
  std::uniform_int_distribution<int> pat(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    V h(static_cast<std::size_t>(len(rng)));
    for (double& x : h) x = val(rng) / 40.0;
    const std::size_t patience = static_cast<std::size_t>(pat(rng));
    const double min_delta = trial % 2 ? 0.03 : 1e-4;
    CHECK(EarlyStopCheck(h, patience, min_delta) == ReferenceStop(h, patience, min_delta));
  }
}

struct Rig {
  KnowledgeGraph kg = testing::MemorizationKg();
  FilterIndex filter{kg};
  HashEncoder encoder{64, 0};
  MaskedEntityModel model{ModelContext{&kg, &filter, &encoder, {}}};
};

TEST_CASE("fit fast run and determinism") {
  Rig rig;
  TrainerConfig cfg;
  cfg.fast_run = true;
  cfg.epochs = 50;
  cfg.batch_size = 4;
  std::vector<LogRecord> logs;
  FitOptions opts;
  opts.log_sink = [&](const LogRecord& r) { logs.push_back(r); };
  const Vector before = rig.encoder.Encode(EncodeTail(rig.kg, 0, {}));
  const TrainingState a = Fit(cfg, rig.model, opts);
  CHECK(a.epoch == 2);
  CHECK(a.step == 10);
  REQUIRE(logs.size() == 2);
  CHECK(logs[0].step < logs[1].step);
  CHECK(logs[0].ToJson().find("\"train_loss\"") != std::string::npos);
  CHECK(rig.encoder.Encode(EncodeTail(rig.kg, 0, {})) == before);

  Rig other;
  const TrainingState b = Fit(cfg, other.model);
  CHECK(a.params.entity_table == b.params.entity_table);
  CHECK(a.ema_shadow.entity_table == b.ema_shadow.entity_table);
  CHECK(a.rng_state == b.rng_state);
}

TEST_CASE("resuming continues the counters and matches an uninterrupted run") {
  TrainerConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.5;
  Rig full_rig;
  const TrainingState full = Fit(cfg, full_rig.model);

  Rig part_rig;
  TrainerConfig first = cfg;
  first.epochs = 2;
  const TrainingState half = Fit(first, part_rig.model);
  const auto dir = testing::TempDir("resume");
  SaveCheckpoint(dir, half, first, ModelKind::kMaskedEntity, part_rig.kg);
  Checkpoint ck = LoadCheckpoint(dir, part_rig.kg);
  CHECK(ck.state.step == half.step);
  const TrainingState resumed = Fit(cfg, part_rig.model, {}, std::move(ck.state));
  CHECK(resumed.step == full.step);
  CHECK(resumed.epoch == 4);
  CHECK(resumed.params.entity_table == full.params.entity_table);
  CHECK(resumed.ema_shadow.entity_table == full.ema_shadow.entity_table);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rig rig;
  TrainerConfig cfg;
  cfg.fast_run = true;
  const TrainingState st = Fit(cfg, rig.model);
  const auto dir = testing::TempDir("ckpt");
  SaveCheckpoint(dir / "a", st, cfg, ModelKind::kMaskedEntity, rig.kg);
  const Checkpoint ck = LoadCheckpoint(dir / "a", rig.kg);
  CHECK(ck.kind == ModelKind::kMaskedEntity);
  CHECK(ck.state.params.entity_table == st.params.entity_table);
  CHECK(ck.eval_params.entity_table == st.ema_shadow.entity_table);
  SaveCheckpoint(dir / "b", ck.state, cfg, ModelKind::kMaskedEntity, rig.kg);
  for (const char* f : {"header.json", "entities.emb", "params.emb", "raw_entities.emb"}) {
    CHECK(testing::ReadText(dir / "a" / f) == testing::ReadText(dir / "b" / f));
  }
}

TEST_CASE("masked-entity model memorizes the toy graph") {
  Rig rig;
  TrainerConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 0.5;
  cfg.ema_decay = 0.9;
  FitOptions opts;
  opts.train_head_queries = false;
  const TrainingState st = Fit(cfg, rig.model, opts);
  auto scorer = [&](EntityId k, RelationId r, Direction d) {
    return rig.model.ScoreAll(st.EvalParameters(cfg), k, r, d);
  };
  const auto res = LinkPredictionEval(scorer, rig.kg, rig.kg.train(), rig.filter,
                                      Directions::kTail);
  CHECK(res.report.hits1 == 1.0);
}

TEST_CASE("two-tower, joint and generation models train without error") {
  const KnowledgeGraph kg = testing::RandomKg(30, 3, 120, 4);
  const FilterIndex filter(kg);
  HashEncoder enc(32, 1);
  TrainerConfig cfg;
  cfg.fast_run = true;
  cfg.negatives_k = 4;
  for (ModelKind kind : {ModelKind::kTwoTower, ModelKind::kJoint, ModelKind::kGeneration}) {
    auto model = MakeModel(kind, ModelContext{&kg, &filter, &enc, {}});
    const TrainingState st = Fit(cfg, *model);
    CHECK(st.epoch == 2);
    CHECK(st.params.AllFinite());
    const auto scores = model->ScoreAll(st.EvalParameters(cfg), 0, 0, Direction::kPredictHead);
    CHECK(scores.size() == 30);
  }
}

TEST_CASE("trainer config validation") {
  TrainerConfig cfg;
  cfg.label_smoothing = 1.0;
  CHECK_THROWS_AS(cfg.Validate(), ConfigError);
  cfg = TrainerConfig{};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.Validate(), ConfigError);
  cfg = TrainerConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.Validate(), ConfigError);
}

}  // namespace
}  // namespace kglab
