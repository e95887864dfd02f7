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

#include <sstream>

#include "kglab/llm.h"

namespace kglab {
namespace {

constexpr std::string_view kCandidatePrefix = "Candidates: ";

std::string QuoteCandidate(const std::string& name) {
  if (name.find(',') == std::string::npos &&
      name.find('"') == std::string::npos) {
    return name;
  }
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

const char kDefaultTaskDescription[] =
    "Predict the missing tail entity of the last query triple "
    "(head entity, relation, ?). Choose the answer from the candidate "
    "entities below and reply with the entity name only.";

std::string QuestionText(const KnowledgeGraph& kg, EntityId head,
                         RelationId relation) {
  return "(" + NormalizeText(kg.entity(head).surface_name) + ", " +
         RelationSurface(kg.relation(relation).surface_name) + ", ?)";
}

std::string TemplateRationale(const KnowledgeGraph& kg, const Triple& t) {
  const std::string head = NormalizeText(kg.entity(t.head).surface_name);
  const std::string tail = NormalizeText(kg.entity(t.tail).surface_name);
  return head + " is connected to " + tail + " via " +
         RelationSurface(kg.relation(t.relation).surface_name) +
         ", so the answer is " + tail + ".";
}

std::vector<Demonstration> SelectDemonstrations(const TripleRetriever& retriever,
                                                EntityId head,
                                                RelationId relation,
                                                std::size_t n,
                                                bool with_rationale) {
  std::vector<Demonstration> out;
  if (n == 0) return out;
  const KnowledgeGraph& kg = retriever.kg();
  for (const Bm25Hit& hit : retriever.Retrieve(head, relation, n)) {
    const Triple& t = kg.train()[hit.doc];
    Demonstration demo;
    demo.question = QuestionText(kg, t.head, t.relation);
    demo.answer = NormalizeText(kg.entity(t.tail).surface_name);
    if (with_rationale) demo.rationale = TemplateRationale(kg, t);
    out.push_back(std::move(demo));
  }
  return out;
}

Prompt BuildPrompt(std::string_view task_description,
                   std::vector<std::string> candidates,
                   std::vector<Demonstration> demonstrations,
                   std::string_view test_query) {
  if (candidates.empty()) throw DataError("prompt needs at least one candidate");
  Prompt p;
  p.task_description = NormalizeText(task_description);
  p.candidates = std::move(candidates);
  p.demonstrations = std::move(demonstrations);
  p.test_query = NormalizeText(test_query);

  std::ostringstream out;
  out << p.task_description << '\n' << kCandidatePrefix;
  for (std::size_t i = 0; i < p.candidates.size(); ++i) {
    if (i > 0) out << ", ";
    out << QuoteCandidate(p.candidates[i]);
  }
  out << "\n\n";
  if (!p.demonstrations.empty()) {
    for (const auto& d : p.demonstrations) {
      out << "Q: " << NormalizeText(d.question);
      if (d.rationale) out << ' ' << NormalizeText(*d.rationale);
      out << " A: " << NormalizeText(d.answer) << '\n';
    }
    out << '\n';
  }
  out << "Q: " << p.test_query << " A: ";
  p.rendered = out.str();
  return p;
}

std::vector<std::string> ParseCandidateLine(std::string_view rendered) {
  const auto start = rendered.find(std::string("\n") + std::string(kCandidatePrefix));
  if (start == std::string_view::npos) {
    throw DataError("rendered prompt has no candidate line");
  }
  const auto begin = start + 1 + kCandidatePrefix.size();
  const auto end = rendered.find('\n', begin);
  const std::string_view line = rendered.substr(begin, end - begin);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i <= line.size()) {
    std::string item;
    if (i < line.size() && line[i] == '"') {
      ++i;
      while (i < line.size()) {
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            item.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        item.push_back(line[i++]);
      }
    } else {
      const auto comma = line.find(", ", i);
      const auto stop = comma == std::string_view::npos ? line.size() : comma;
      item = std::string(line.substr(i, stop - i));
      i = stop;
    }
    out.push_back(std::move(item));
    if (i >= line.size()) break;
    i += 2;  // ", "
  }
  return out;
}

}  // namespace kglab
