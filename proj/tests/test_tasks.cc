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

#include "doctest.h"
#include "kglab/models.h"
#include "kglab/tasks.h"
#include "kglab/trainer.h"
#include "testing.h"

namespace kglab {
namespace {

// A masked-entity model trained to memorize h -> h+1 on the toy graph.
struct Memorized {
  KnowledgeGraph kg = testing::MemorizationKg();
  FilterIndex filter{kg};
  HashEncoder encoder{64, 0};
  TrainerConfig cfg;
  ModelParameters params;

  Memorized() {
    MaskedEntityModel model(ModelContext{&kg, &filter, &encoder, {}});
    cfg.epochs = 200;
    cfg.learning_rate = 0.5;
    cfg.ema_decay = 0.9;
    FitOptions opts;
    opts.train_head_queries = false;
    params = Fit(cfg, model, opts).EvalParameters(cfg);
  }

  MaskedModelView View() const { return {&params, &encoder, &kg, {}, {}}; }
};

const Memorized& Trained() {
  static const Memorized m;
  return m;
}

TEST_CASE("kgc predict") {
  const Memorized& m = Trained();
  for (EntityId h = 0; h < 20; ++h) {
    const auto top = KgcPredict(m.View(), h, 0, Direction::kPredictTail, 1);
    REQUIRE(top.size() == 1);
    CHECK(top[0].entity == (h + 1) % 20);
  }
  const auto five = KgcPredict(m.View(), 0, 0, Direction::kPredictTail, 5);
  CHECK(five.size() == 5);
  CHECK(std::is_sorted(five.begin(), five.end(),
                       [](const ScoredEntity& a, const ScoredEntity& b) { return a.score > b.score; }));

  // The filter removes the known answer unless it is the gold.
  const auto filtered = KgcPredict(m.View(), 0, 0, Direction::kPredictTail, 20, &m.filter);
  CHECK(std::none_of(filtered.begin(), filtered.end(),
                     [](const ScoredEntity& s) { return s.entity == 1; }));
  const auto kept = KgcPredict(m.View(), 0, 0, Direction::kPredictTail, 1, &m.filter, 1);
  CHECK(kept[0].entity == 1);

  std::vector<TokenSequence> seen;
  MaskedModelView view = m.View();
  view.observer = [&](const TokenSequence& s) { seen.push_back(s); };
  KgcPredict(view, 3, 0, Direction::kPredictHead, 1);
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].items[1] == Token::Reverse());
  CHECK(seen[0].count(TokenKind::kMask) == 1);
}

TEST_CASE("qa matches kgc on an identical sequence") {
  const Memorized& m = Trained();
  const SerializeConfig cfg;
  const std::string question = "alpha [E0] [SEP] next to";
  CHECK(QaSequence(question, cfg) ==
        EncodeMaskedQuery(m.kg, 0, 0, Direction::kPredictTail, cfg));
  const auto qa = QaAnswer(m.View(), question, 3);
  const auto kgc = KgcPredict(m.View(), 0, 0, Direction::kPredictTail, 3);
  REQUIRE(qa.size() == kgc.size());
  for (std::size_t i = 0; i < qa.size(); ++i) {
    CHECK(qa[i].entity == kgc[i].entity);
    CHECK(qa[i].score == kgc[i].score);
  }
  CHECK(qa[0].entity == 1);
  const auto again = QaAnswer(m.View(), question, 3);
  CHECK(again[0].score == qa[0].score);
  CHECK_THROWS_AS(QaSequence("", cfg), DataError);

  SerializeConfig tight;
  tight.max_len = 8;
  const TokenSequence cut = QaSequence("one two three four five six seven", tight);
  CHECK(cut.size() == 8);
  CHECK(cut.Render() == "[CLS] one two three four [SEP] [MASK] [SEP]");
}

TEST_CASE("recommendation") {
  const KnowledgeGraph kg = testing::MemorizationKg();
  HashEncoder enc(64, 2);
  ModelParameters params = ModelParameters::Initialize(20, 1, 64, 0.01, false, 1);
  MaskedModelView view{&params, &enc, &kg, {}, {}};
  const std::vector<InteractionHistory> histories = {
      {"u1", {0, 1}}, {"u2", {0, 1}}, {"u3", {2, 3}}, {"u4", {4, 5, 6}}};
  const auto examples = RecommendationExamples(view, histories);
  CHECK(examples.size() == 5);
  TrainerConfig cfg;
  cfg.epochs = 100;
  cfg.learning_rate = 0.5;
  FitMaskedExamples(params, examples, cfg);

  const std::vector<EntityId> seen_a = {0};
  const auto next = RecommendNext(view, {"x", seen_a}, 1);
  REQUIRE(next.size() == 1);
  CHECK(next[0].entity == 1);
  const auto after_c = RecommendNext(view, {"y", {2}}, 1);
  CHECK(after_c[0].entity == 3);

  const auto all = RecommendNext(view, {"z", {0, 1}}, 20);
  CHECK(all.size() == 18);
  for (const auto& s : all) CHECK((s.entity != 0 && s.entity != 1));

  SerializeConfig small;
  small.max_len = 6;
  const std::vector<EntityId> many = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(RecommendationSequence(many, small).Render() == "[CLS] [E7] [E8] [E9] [MASK] [SEP]");
  CHECK_THROWS_AS(RecommendationSequence(std::vector<EntityId>{}, small), DataError);
}

// Entity h's embedding points at the token naming h+1; the cloze text is
// identical across queries, so only the mention can tell them apart.
struct ProbeRig {
  KnowledgeGraph kg = testing::MemorizationKg();
  HashEncoder enc{32, 3};
  ModelParameters params;
  ProbeModel probe;
  std::vector<ProbeExample> examples;

  ProbeRig() {
    params.entity_table = Matrix::Zero(20, 32);
    probe.token_table = Matrix::Zero(20, 32);
    for (int h = 0; h < 20; ++h) {
      probe.vocabulary.push_back(kg.entity(h).surface_name);
      params.entity_table(h, h) = 5.0;
      probe.token_table((h + 1) % 20, h) = 1.0;
    }
    probe.lambda = 10.0;
    for (int h = 0; h < 20; ++h) {
      ClozeQuery q = ParseCloze("the one after it is [MASK]", {});
      q.mention = EntityMention{h, 1, 2};
      examples.push_back({q, kg.entity((h + 1) % 20).surface_name});
    }
  }

  MaskedModelView View() const { return {&params, &enc, &kg, {}, {}}; }
};

TEST_CASE("probing") {
  ProbeRig rig;
  const ProbeReport report = EvaluateProbe(rig.View(), rig.probe, rig.examples);
  CHECK(report.count == 20);
  CHECK(report.augmented_hits1 == 1.0);
  CHECK(report.augmented_hits1 >= report.base_hits1);
  CHECK(report.augmented_mrr >= report.base_mrr);
  CHECK(report.base_hits1 <= 1.0 / 20 + 1e-12);

  ProbeModel off = rig.probe;
  off.lambda = 0.0;
  const ProbeResult same = ProbeFact(rig.View(), off, rig.examples[3].query, 20);
  REQUIRE(same.augmented.has_value());
  REQUIRE(same.augmented->size() == same.base.size());
  for (std::size_t i = 0; i < same.base.size(); ++i) {
    CHECK((*same.augmented)[i].token == same.base[i].token);
    CHECK((*same.augmented)[i].score == same.base[i].score);
  }

  ClozeQuery plain = rig.examples[0].query;
  plain.mention.reset();
  const ProbeResult base_only = ProbeFact(rig.View(), rig.probe, plain, 5);
  CHECK(base_only.base.size() == 5);
  CHECK_FALSE(base_only.augmented.has_value());

  CHECK_THROWS_AS(ParseCloze("no mask here", {}), DataError);
  CHECK_THROWS_AS(ParseCloze("[MASK] and [MASK]", {}), DataError);
  ClozeQuery outside = rig.examples[0].query;
  outside.mention = EntityMention{0, 3, 40};
  CHECK_THROWS_AS(outside.Validate(), DataError);
  CHECK(rig.probe.IndexOf("bravo") == 1);
  CHECK_FALSE(rig.probe.IndexOf("zulu").has_value());
}

TEST_CASE("token table fitting learns the base contexts") {
  ProbeRig rig;
  // Distinct cloze texts, so the base context alone is informative.
  std::vector<ProbeExample> distinct;
  for (int h = 0; h < 5; ++h) {
    distinct.push_back({ParseCloze(rig.kg.entity(h).surface_name + " comes before [MASK]", {}),
                        rig.kg.entity(h + 1).surface_name});
  }
  rig.probe.token_table = Matrix::Zero(20, 32);
  TrainerConfig cfg;
  cfg.epochs = 100;
  cfg.learning_rate = 0.5;
  FitTokenTable(rig.View(), rig.probe, distinct, cfg);
  CHECK(EvaluateProbe(rig.View(), rig.probe, distinct).base_hits1 == 1.0);
}

TEST_CASE("task input files") {
  const KnowledgeGraph kg = testing::MemorizationKg();
  const auto dir = testing::TempDir("tasks");
  testing::WriteText(dir / "qa.tsv", "who follows alpha?\te1\nwho follows bravo?\te2\n");
  const auto qa = LoadQaFile((dir / "qa.tsv").string(), kg);
  REQUIRE(qa.size() == 2);
  CHECK(qa[1].question == "who follows bravo?");
  CHECK(qa[1].gold == 2);

  testing::WriteText(dir / "inter.tsv", "u1\te0,e1,e2\nu2\te5\n");
  const auto hist = LoadInteractions((dir / "inter.tsv").string(), kg);
  REQUIRE(hist.size() == 2);
  CHECK(hist[0].items == std::vector<EntityId>{0, 1, 2});
  CHECK(hist[1].user == "u2");

  testing::WriteText(dir / "probe.tsv",
                     "alpha comes before [MASK]\tbravo\te0:0:1\n[MASK] is a letter\talpha\n");
  const auto probes = LoadProbeFile((dir / "probe.tsv").string(), kg, {});
  REQUIRE(probes.size() == 2);
  REQUIRE(probes[0].query.mention.has_value());
  CHECK(probes[0].query.mention->entity == 0);
  CHECK(probes[0].query.mention->end == 1);
  CHECK_FALSE(probes[1].query.mention.has_value());

  testing::WriteText(dir / "bad.tsv", "ok\te1\nbroken\te99\n");
  try {
    LoadQaFile((dir / "bad.tsv").string(), kg);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("bad.tsv:2") != std::string::npos);
  }
  testing::WriteText(dir / "bad_probe.tsv", "no mask\tx\n");
  CHECK_THROWS_AS(LoadProbeFile((dir / "bad_probe.tsv").string(), kg, {}), DataError);
}

}  // namespace
}  // namespace kglab
