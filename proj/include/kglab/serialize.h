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

#ifndef KGLAB_SERIALIZE_H_
#define KGLAB_SERIALIZE_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kglab/common.h"
#include "kglab/kg.h"

namespace kglab {

enum class TokenKind { kText, kCls, kSep, kMask, kReverse, kEntity, kRelation };

// Either an ordinary text token or a reserved special token. Special tokens
// live in their own kind space, so they can never collide with text.
struct Token {
  TokenKind kind = TokenKind::kText;
  std::string text;      // kText only
  std::int32_t id = -1;  // kEntity / kRelation only

  static Token Text(std::string t) { return {TokenKind::kText, std::move(t), -1}; }
  static Token Cls() { return {TokenKind::kCls, {}, -1}; }
  static Token Sep() { return {TokenKind::kSep, {}, -1}; }
  static Token Mask() { return {TokenKind::kMask, {}, -1}; }
  static Token Reverse() { return {TokenKind::kReverse, {}, -1}; }
  static Token OfEntity(EntityId e) { return {TokenKind::kEntity, {}, e}; }
  static Token OfRelation(RelationId r) { return {TokenKind::kRelation, {}, r}; }

  bool is_special() const { return kind != TokenKind::kText; }

  // "[CLS]", "[SEP]", "[MASK]", "[REVERSE]", "[E12]", "[R3]" or the text.
  std::string Render() const;

  friend bool operator==(const Token&, const Token&) = default;
};

struct TokenSequence {
  std::vector<Token> items;
  std::size_t max_len = 0;

  std::size_t size() const { return items.size(); }
  std::size_t count(TokenKind kind) const;

  // Space-joined rendering; the golden-fixture line format.
  std::string Render() const;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

struct SerializeConfig {
  std::size_t max_len = 128;
  std::size_t neighbor_k = 0;
  bool lowercase = true;
  bool description_included = true;
  std::uint64_t neighbor_seed = 0;

  // Throws ConfigError when max_len < 8.
  void Validate() const;
};

// Whitespace tokenizer: optional ASCII lowercasing, every ASCII punctuation
// character becomes its own token, split on Unicode whitespace.
std::vector<std::string> Tokenize(std::string_view text,
                                  const SerializeConfig& cfg);

// Like Tokenize but recognizes bracketed special-token markup ("[MASK]",
// "[SEP]", "[CLS]", "[REVERSE]", "[E<id>]", "[R<id>]") inside the text.
std::vector<Token> TokenizeMarkup(std::string_view text,
                                  const SerializeConfig& cfg);

// [CLS] X^h [SEP] X^r [SEP]. With kPredictHead the known entity is the
// tail and [REVERSE] follows [CLS].
TokenSequence EncodeHrPair(const KnowledgeGraph& kg, EntityId head,
                           RelationId relation, const SerializeConfig& cfg);
TokenSequence EncodeHrPair(const KnowledgeGraph& kg, EntityId known,
                           RelationId relation, Direction direction,
                           const SerializeConfig& cfg);

// [CLS] X^t [SEP]
TokenSequence EncodeTail(const KnowledgeGraph& kg, EntityId tail,
                         const SerializeConfig& cfg);

// [CLS] X^h [E h] [SEP] X^r [SEP] [MASK] [SEP]; kPredictHead inserts
// [REVERSE] directly after [CLS] and uses the known tail.
TokenSequence EncodeMaskedQuery(const KnowledgeGraph& kg, EntityId known,
                                RelationId relation, Direction direction,
                                const SerializeConfig& cfg);

// [CLS] X^h [SEP] X^r [SEP] X^t [SEP]
TokenSequence EncodeJointTriple(const KnowledgeGraph& kg, const Triple& t,
                                const SerializeConfig& cfg);

// Name tokens of an entity alone; the generation target.
std::vector<std::string> EntityNameTokens(const KnowledgeGraph& kg,
                                          EntityId id,
                                          const SerializeConfig& cfg);

}  // namespace kglab

#endif  // KGLAB_SERIALIZE_H_
