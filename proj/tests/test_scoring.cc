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
#include <map>
#include <numeric>
#include <random>

#include "doctest.h"
#include "kglab/scoring.h"
#include "testing.h"

namespace kglab {
namespace {

// Explicit conditional table: prefix (space-joined) -> distribution.
class TableProvider : public LogProbProvider {
 public:
  TableProvider(std::vector<std::string> vocab,
                std::map<std::string, std::vector<double>> probs)
      : vocab_(std::move(vocab)), probs_(std::move(probs)) {
    IndexVocabulary();
  }
  const std::vector<std::string>& vocabulary() const override { return vocab_; }
  std::vector<double> NextTokenLogProbs(
      std::span<const std::string> context,
      std::span<const std::string> prefix) const override {
    std::string key;
    for (const auto& t : context) key += t + " ";
    key += "|";
    for (const auto& t : prefix) key += " " + t;
    const auto& p = probs_.at(key);
    std::vector<double> out;
    for (double v : p) out.push_back(std::log(v));
    return out;
  }

 private:
  std::vector<std::string> vocab_;
  std::map<std::string, std::vector<double>> probs_;
};

// Pseudo-random but fixed distribution for every (context, prefix).
class HashedProvider : public LogProbProvider {
 public:
  explicit HashedProvider(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
    IndexVocabulary();
  }
  const std::vector<std::string>& vocabulary() const override { return vocab_; }
  std::vector<double> NextTokenLogProbs(
      std::span<const std::string> context,
      std::span<const std::string> prefix) const override {
    std::string key;
    for (const auto& t : context) key += t + "\x1f";
    for (const auto& t : prefix) key += t + "\x1e";
    std::vector<double> logits;
    for (const auto& v : vocab_) {
      logits.push_back(static_cast<double>(StableHash(key + v, 5) % 1000) / 250.0);
    }
    double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    for (double& l : logits) l = l - m - std::log(z);
    return logits;
  }

 private:
  std::vector<std::string> vocab_;
};

std::vector<std::string> Words(std::initializer_list<const char*> w) {
  return {w.begin(), w.end()};
}

TEST_CASE("joint score") {
  const KnowledgeGraph kg = testing::FruitKg();
  HashEncoder enc(16, 3);
  ModelParameters p;
  p.classifier_weights = Vector::Zero(16);
  CHECK(ScoreJoint(p, enc, kg, {0, 0, 1}, {}) == 0.5);
  p.classifier_bias = 10.0;
  CHECK(ScoreJoint(p, enc, kg, {0, 0, 1}, {}) >= 0.9999);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int i = 0; i < 16; ++i) p.classifier_weights[i] = g(rng);
  p.classifier_bias = -0.3;
  const Vector x = enc.Encode(EncodeJointTriple(kg, {0, 0, 1}, {}));
  double dot = 0.0;
  for (int i = 15; i >= 0; --i) dot += p.classifier_weights[i] * x[i];
  const double oracle = 1.0 / (1.0 + std::exp(-(dot - 0.3)));
  CHECK(std::abs(ScoreJoint(p, enc, kg, {0, 0, 1}, {}) - oracle) < 1e-12);
}

TEST_CASE("two-tower cosine") {
  auto v = [](double a, double b) { return (Vector(2) << a, b).finished(); };
  CHECK(ScoreTwoTower(v(1, 0), v(1, 0)) == 1.0);
  CHECK(ScoreTwoTower(v(1, 0), v(0, 1)) == 0.0);
  CHECK(std::abs(ScoreTwoTower(v(1, 1), v(1, 0)) - 0.70710678) < 1e-8);
  CHECK(std::abs(ScoreTwoTower(v(3, -2), v(0.5, 4)) -
                 ScoreTwoTower(v(0.5, 4), v(3, -2))) < 1e-15);
  CHECK(std::abs(ScoreTwoTower(v(6, -4), v(0.05, 0.4)) -
                 ScoreTwoTower(v(3, -2), v(0.5, 4))) < 1e-9);
  CHECK_THROWS_AS(ScoreTwoTower(v(0, 0), v(1, 0)), NumericError);
  CHECK_THROWS_AS(ScoreTwoTower(v(1, 0), Vector::Ones(3)), NumericError);
}

TEST_CASE("masked-entity softmax") {
  ModelParameters p;
  p.entity_table = Matrix::Zero(6, 3);
  p.entity_table.row(0) << 1, 2, 3;
  p.entity_table.row(1) << 1, 2, 3;
  const Vector ctx = (Vector(3) << 0.2, -0.1, 0.4).finished();
  const std::vector<EntityId> two = {0, 1};
  const Vector lp = ScoreMaskedEntity(p, ctx, two);
  CHECK(std::abs(lp[0] - std::log(0.5)) < 1e-12);
  CHECK(std::abs(lp[1] - std::log(0.5)) < 1e-12);
  const std::vector<EntityId> one = {4};
  CHECK(ScoreMaskedEntity(p, ctx, one)[0] == 0.0);
  const std::vector<EntityId> bad = {7};
  CHECK_THROWS_AS(ScoreMaskedEntity(p, ctx, bad), DataError);

  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 3; ++c) p.entity_table(r, c) = g(rng);
    }
    const Vector q = (Vector(3) << g(rng), g(rng), g(rng)).finished();
    const std::vector<EntityId> five = {5, 1, 3, 0, 2};
    const Vector out = ScoreMaskedEntity(p, q, five);
    // Independent softmax: reverse-order summation, no max shift.
    std::vector<double> e;
    for (EntityId id : five) e.push_back(std::exp(p.entity_table.row(id).dot(q)));
    double z = 0.0;
    for (auto it = e.rbegin(); it != e.rend(); ++it) z += *it;
    double total = 0.0;
    for (std::size_t j = 0; j < five.size(); ++j) {
      CHECK(std::abs(out[static_cast<Eigen::Index>(j)] - std::log(e[j] / z)) < 1e-9);
      total += std::exp(out[static_cast<Eigen::Index>(j)]);
    }
    CHECK(std::abs(total - 1.0) < 1e-9);

    // Shifting every row by the same delta shifts all logits equally.
    ModelParameters shifted = p;
    const Eigen::RowVectorXd delta = Eigen::RowVectorXd::Constant(3, g(rng));
    for (int r = 0; r < 6; ++r) shifted.entity_table.row(r) += delta;
    const Vector out2 = ScoreMaskedEntity(shifted, q, five);
    CHECK((out2 - out).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("log-softmax survives large logits") {
  const Vector lp = LogSoftmax((Vector(3) << 1000, 1000, -1000).finished());
  CHECK(std::abs(lp[0] - std::log(0.5)) < 1e-12);
  CHECK(std::isfinite(lp[2]));
}

TEST_CASE("generation score") {
  UniformLogProbProvider uniform(Words({"a", "b", "c", "d"}));
  const auto ctx = Words({"x"});
  CHECK(std::abs(ScoreGeneration(uniform, ctx, Words({"a", "b", "c"})) -
                 3.0 * std::log(0.25)) < 1e-12);
  CHECK_THROWS_AS(ScoreGeneration(uniform, ctx, Words({"zz"})), DataError);
  CHECK_THROWS_AS(ScoreGeneration(uniform, ctx, Words({})), DataError);

  TableProvider certain(Words({"a", "b"}), {{"x |", {1.0, 0.0}}, {"x | a", {0.0, 1.0}}});
  CHECK(ScoreGeneration(certain, ctx, Words({"a", "b"})) == 0.0);

  TableProvider bigram(Words({"a", "b"}), {{"x |", {0.7, 0.3}}, {"x | a", {0.2, 0.8}}});
  const double hand = std::log(0.7) + std::log(0.8);
  CHECK(std::abs(ScoreGeneration(bigram, ctx, Words({"a", "b"})) - hand) < 1e-12);
}

TEST_CASE("generation score chain rule") {
  HashedProvider lp(Words({"p", "q", "r", "s"}));
  const auto ctx = Words({"c1", "c2"});
  const auto t1 = Words({"q", "r"});
  const auto t2 = Words({"s", "p"});
  auto joined = t1;
  joined.insert(joined.end(), t2.begin(), t2.end());
  double tail_terms = 0.0;
  std::vector<std::string> prefix = t1;
  for (const auto& tok : t2) {
    tail_terms += lp.NextTokenLogProbs(ctx, prefix)[static_cast<std::size_t>(lp.IndexOf(tok))];
    prefix.push_back(tok);
  }
  CHECK(std::abs(ScoreGeneration(lp, ctx, joined) -
                 (ScoreGeneration(lp, ctx, t1) + tail_terms)) < 1e-12);
}

TEST_CASE("trie fixture round trip") {
  const EntityTrie trie = EntityTrie::Load(testing::FixtureDir() / "trie_10.tsv");
  CHECK(trie.num_entities() == 10);
  const auto dir = testing::TempDir("trie");
  trie.Save(dir / "t.tsv");
  CHECK(testing::ReadText(dir / "t.tsv") ==
        testing::ReadText(testing::FixtureDir() / "trie_10.tsv"));
  // Every root-to-terminal path spells exactly one entity.
  for (const auto& [id, path] : trie.paths()) {
    std::size_t node = trie.root();
    for (const auto& tok : path) node = trie.node(node).children.at(tok);
    CHECK(std::count(trie.node(node).terminals.begin(), trie.node(node).terminals.end(), id) == 1);
  }
}

TEST_CASE("constrained decoding") {
  SUBCASE("single entity") {
    UniformLogProbProvider lp(Words({"red", "blue"}));
    EntityTrie trie;
    trie.Insert(0, Words({"red"}));
    const auto out = DecodeConstrained(lp, Words({"c"}), trie, 3);
    REQUIRE(out.size() == 1);
    CHECK(out[0].entity == 0);
    CHECK(out[0].score == ScoreGeneration(lp, Words({"c"}), Words({"red"})));
  }
  SUBCASE("uniform ties break by id") {
    UniformLogProbProvider lp(Words({"a", "b"}));
    EntityTrie trie;
    trie.Insert(1, Words({"b"}));
    trie.Insert(0, Words({"a"}));
    const auto out = DecodeConstrained(lp, Words({"c"}), trie, 2);
    REQUIRE(out.size() == 2);
    CHECK(out[0].entity == 0);
    CHECK(out[1].entity == 1);
    CHECK(out[0].score == out[1].score);
  }
  SUBCASE("wide beam equals exhaustive ranking") {
    const EntityTrie trie = EntityTrie::Load(testing::FixtureDir() / "trie_10.tsv");
    HashedProvider lp(Words({"red", "wine", "glass", "blue", "whale", "green", "tea",
                             "cake", "other"}));
    for (int q = 0; q < 25; ++q) {
      const auto ctx = Words({"query"});
      std::vector<std::string> c = ctx;
      c.push_back(std::to_string(q));
      std::vector<ScoredEntity> brute;
      for (const auto& [id, path] : trie.paths()) {
        brute.push_back({id, ScoreGeneration(lp, c, path)});
      }
      std::sort(brute.begin(), brute.end(), [](const ScoredEntity& a, const ScoredEntity& b) {
        return a.score != b.score ? a.score > b.score : a.entity < b.entity;
      });
      for (std::size_t beam : {10u, 16u}) {
        const auto out = DecodeConstrained(lp, c, trie, beam);
        REQUIRE(out.size() == brute.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
          CHECK(out[i].entity == brute[i].entity);
          CHECK(std::abs(out[i].score - brute[i].score) < 1e-12);
        }
      }
      const auto narrow = DecodeConstrained(lp, c, trie, 2);
      CHECK(narrow.size() <= 2);
    }
  }
}

}  // namespace
}  // namespace kglab
