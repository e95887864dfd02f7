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

#include "kglab/serialize.h"

#include <algorithm>
#include <cctype>
#include <optional>

namespace kglab {
namespace {

bool IsAsciiPunct(unsigned char c) { return c < 128 && std::ispunct(c); }

// Length in bytes of a Unicode whitespace code point starting at `pos`, or 0.
std::size_t WhitespaceLength(std::string_view s, std::size_t pos) {
  const auto b = [&](std::size_t i) {
    return i < s.size() ? static_cast<unsigned char>(s[i]) : 0;
  };
  const unsigned char c = b(pos);
  if (c == ' ' || (c >= 0x09 && c <= 0x0d)) return 1;
  if (c == 0xc2 && (b(pos + 1) == 0x85 || b(pos + 1) == 0xa0)) return 2;
  if (c == 0xe1 && b(pos + 1) == 0x9a && b(pos + 2) == 0x80) return 3;
  if (c == 0xe2 && b(pos + 1) == 0x80 &&
      ((b(pos + 2) >= 0x80 && b(pos + 2) <= 0x8a) || b(pos + 2) == 0xa8 ||
       b(pos + 2) == 0xa9 || b(pos + 2) == 0xaf)) {
    return 3;
  }
  if (c == 0xe2 && b(pos + 1) == 0x81 && b(pos + 2) == 0x9f) return 3;
  if (c == 0xe3 && b(pos + 1) == 0x80 && b(pos + 2) == 0x80) return 3;
  return 0;
}

enum class PartKind { kFixed, kName, kExtra };

struct Part {
  PartKind kind;
  std::vector<Token> tokens;
};

std::vector<Token> AsTokens(const std::vector<std::string>& words) {
  std::vector<Token> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(Token::Text(w));
  return out;
}

// Appends name and extra parts for one entity: description first, then
// sampled neighbor verbalizations, joined by "; ".
void AppendEntityText(const KnowledgeGraph& kg, EntityId id,
                      const SerializeConfig& cfg, std::vector<Part>& parts) {
  const Entity& e = kg.entity(id);
  parts.push_back({PartKind::kName, AsTokens(Tokenize(e.surface_name, cfg))});
  std::vector<std::string> pieces;
  if (cfg.description_included && !e.description.empty()) {
    pieces.push_back(e.description);
  }
  if (cfg.neighbor_k > 0) {
    for (const AdjacentEdge& edge :
         SampleNeighbors(kg, id, cfg.neighbor_k, cfg.neighbor_seed)) {
      const Triple t = edge.outgoing ? Triple{id, edge.relation, edge.neighbor}
                                     : Triple{edge.neighbor, edge.relation, id};
      pieces.push_back(VerbalizeTriple(kg, t));
    }
  }
  std::string extra;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (i > 0) extra += "; ";
    extra += pieces[i];
  }
  parts.push_back({PartKind::kExtra, AsTokens(Tokenize(extra, cfg))});
}

void AppendRelationText(const KnowledgeGraph& kg, RelationId id,
                        const SerializeConfig& cfg, std::vector<Part>& parts) {
  const Relation& r = kg.relation(id);
  parts.push_back(
      {PartKind::kName, AsTokens(Tokenize(RelationSurface(r.surface_name), cfg))});
  std::vector<Token> extra;
  if (cfg.description_included && !r.description.empty()) {
    extra = AsTokens(Tokenize(r.description, cfg));
  }
  parts.push_back({PartKind::kExtra, std::move(extra)});
}

void AppendFixed(std::vector<Part>& parts, Token t) {
  parts.push_back({PartKind::kFixed, {std::move(t)}});
}

// Trims extras (last segment first), then names (last segment first) until
// the total fits. Fixed special tokens are never removed.
TokenSequence Assemble(std::vector<Part> parts, const SerializeConfig& cfg) {
  cfg.Validate();
  std::size_t total = 0;
  for (const Part& p : parts) total += p.tokens.size();
  for (PartKind victim : {PartKind::kExtra, PartKind::kName}) {
    for (auto it = parts.rbegin(); it != parts.rend() && total > cfg.max_len;
         ++it) {
      if (it->kind != victim) continue;
      const std::size_t drop = std::min(it->tokens.size(), total - cfg.max_len);
      it->tokens.resize(it->tokens.size() - drop);
      total -= drop;
    }
  }
  TokenSequence seq;
  seq.max_len = cfg.max_len;
  seq.items.reserve(total);
  for (Part& p : parts) {
    for (Token& t : p.tokens) seq.items.push_back(std::move(t));
  }
  return seq;
}

}  // namespace

std::string Token::Render() const {
  switch (kind) {
    case TokenKind::kText: return text;
    case TokenKind::kCls: return "[CLS]";
    case TokenKind::kSep: return "[SEP]";
    case TokenKind::kMask: return "[MASK]";
    case TokenKind::kReverse: return "[REVERSE]";
    case TokenKind::kEntity: return "[E" + std::to_string(id) + "]";
    case TokenKind::kRelation: return "[R" + std::to_string(id) + "]";
  }
  return text;
}

std::size_t TokenSequence::count(TokenKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(),
                    [kind](const Token& t) { return t.kind == kind; }));
}

std::string TokenSequence::Render() const {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += items[i].Render();
  }
  return out;
}

void SerializeConfig::Validate() const {
  if (max_len < 8) {
    throw ConfigError("max_len must be at least 8, got " +
                      std::to_string(max_len));
  }
}

std::vector<std::string> Tokenize(std::string_view text,
                                  const SerializeConfig& cfg) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::size_t ws = WhitespaceLength(text, i); ws > 0) {
      flush();
      i += ws;
      continue;
    }
    const auto c = static_cast<unsigned char>(text[i]);
    if (IsAsciiPunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(cfg.lowercase && c < 128
                            ? static_cast<char>(std::tolower(c))
                            : static_cast<char>(c));
    }
    ++i;
  }
  flush();
  return out;
}

std::vector<Token> TokenizeMarkup(std::string_view text,
                                  const SerializeConfig& cfg) {
  std::vector<Token> out;
  std::size_t plain_start = 0;
  std::size_t i = 0;
  auto emit_plain = [&](std::size_t end) {
    for (auto& w : Tokenize(text.substr(plain_start, end - plain_start), cfg)) {
      out.push_back(Token::Text(std::move(w)));
    }
  };
  while (i < text.size()) {
    if (text[i] != '[') {
      ++i;
      continue;
    }
    const std::size_t close = text.find(']', i);
    if (close == std::string_view::npos) break;
    const std::string_view inner = text.substr(i + 1, close - i - 1);
    std::optional<Token> special;
    if (inner == "CLS") special = Token::Cls();
    else if (inner == "SEP") special = Token::Sep();
    else if (inner == "MASK") special = Token::Mask();
    else if (inner == "REVERSE") special = Token::Reverse();
    else if (inner.size() >= 2 && (inner[0] == 'E' || inner[0] == 'R') &&
             std::all_of(inner.begin() + 1, inner.end(),
                         [](char c) { return c >= '0' && c <= '9'; }) &&
             inner.size() <= 10) {
      const auto id = static_cast<std::int32_t>(
          std::stoll(std::string(inner.substr(1))));
      special = inner[0] == 'E' ? Token::OfEntity(id) : Token::OfRelation(id);
    }
    if (!special) {
      ++i;
      continue;
    }
    emit_plain(i);
    out.push_back(*special);
    i = close + 1;
    plain_start = i;
  }
  emit_plain(text.size());
  return out;
}

TokenSequence EncodeHrPair(const KnowledgeGraph& kg, EntityId head,
                           RelationId relation, const SerializeConfig& cfg) {
  return EncodeHrPair(kg, head, relation, Direction::kPredictTail, cfg);
}

TokenSequence EncodeHrPair(const KnowledgeGraph& kg, EntityId known,
                           RelationId relation, Direction direction,
                           const SerializeConfig& cfg) {
  std::vector<Part> parts;
  AppendFixed(parts, Token::Cls());
  if (direction == Direction::kPredictHead) AppendFixed(parts, Token::Reverse());
  AppendEntityText(kg, known, cfg, parts);
  AppendFixed(parts, Token::Sep());
  AppendRelationText(kg, relation, cfg, parts);
  AppendFixed(parts, Token::Sep());
  return Assemble(std::move(parts), cfg);
}

TokenSequence EncodeTail(const KnowledgeGraph& kg, EntityId tail,
                         const SerializeConfig& cfg) {
  std::vector<Part> parts;
  AppendFixed(parts, Token::Cls());
  AppendEntityText(kg, tail, cfg, parts);
  AppendFixed(parts, Token::Sep());
  return Assemble(std::move(parts), cfg);
}

TokenSequence EncodeMaskedQuery(const KnowledgeGraph& kg, EntityId known,
                                RelationId relation, Direction direction,
                                const SerializeConfig& cfg) {
  std::vector<Part> parts;
  AppendFixed(parts, Token::Cls());
  if (direction == Direction::kPredictHead) AppendFixed(parts, Token::Reverse());
  AppendEntityText(kg, known, cfg, parts);
  AppendFixed(parts, Token::OfEntity(known));
  AppendFixed(parts, Token::Sep());
  AppendRelationText(kg, relation, cfg, parts);
  AppendFixed(parts, Token::Sep());
  AppendFixed(parts, Token::Mask());
  AppendFixed(parts, Token::Sep());
  return Assemble(std::move(parts), cfg);
}

TokenSequence EncodeJointTriple(const KnowledgeGraph& kg, const Triple& t,
                                const SerializeConfig& cfg) {
  kg.check_triple(t);
  std::vector<Part> parts;
  AppendFixed(parts, Token::Cls());
  AppendEntityText(kg, t.head, cfg, parts);
  AppendFixed(parts, Token::Sep());
  AppendRelationText(kg, t.relation, cfg, parts);
  AppendFixed(parts, Token::Sep());
  AppendEntityText(kg, t.tail, cfg, parts);
  AppendFixed(parts, Token::Sep());
  return Assemble(std::move(parts), cfg);
}

std::vector<std::string> EntityNameTokens(const KnowledgeGraph& kg,
                                          EntityId id,
                                          const SerializeConfig& cfg) {
  return Tokenize(kg.entity(id).surface_name, cfg);
}

}  // namespace kglab
