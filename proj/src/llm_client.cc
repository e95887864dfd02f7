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

#include <cstdlib>

#include "kglab/llm.h"

namespace kglab {
namespace {

std::string GetEnv(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

}  // namespace

LlmClientConfig LlmClientConfig::FromEnvironment() {
  LlmClientConfig cfg;
  cfg.endpoint = GetEnv("KGLAB_API_BASE");
  cfg.api_key = GetEnv("KGLAB_API_KEY");
  return cfg;
}

void LlmClientConfig::Validate() const {
  if (endpoint.empty()) {
    throw ConfigError("LLM client needs an endpoint (KGLAB_API_BASE)");
  }
  if (api_key.empty()) {
    throw ConfigError("LLM client needs a credential (KGLAB_API_KEY)");
  }
  if (max_retries < 0) throw ConfigError("max_retries must be non-negative");
}

RetryPolicy LlmClientConfig::Retry() const {
  RetryPolicy p;
  p.max_attempts = max_retries + 1;
  p.backoff_base = backoff_base;
  return p;
}

ChatCompletionClient::ChatCompletionClient(LlmClientConfig cfg)
    : ChatCompletionClient(std::move(cfg), nullptr) {}

ChatCompletionClient::ChatCompletionClient(
    LlmClientConfig cfg, std::shared_ptr<HttpTransport> transport)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      limiter_(cfg_.min_request_interval) {
  cfg_.Validate();
  if (!transport_) transport_ = MakeHttpTransport(cfg_.endpoint, cfg_.timeout);
}

std::string ChatCompletionClient::Complete(const Prompt& prompt) {
  nlohmann::json req = {
      {"model", cfg_.model},
      {"temperature", cfg_.temperature},
      {"messages",
       nlohmann::json::array({{{"role", "user"}, {"content", prompt.rendered}}})}};
  const nlohmann::json res =
      PostJsonWithRetry(*transport_, "/chat/completions", req, cfg_.api_key,
                        cfg_.Retry(), &limiter_, &stats_);
  try {
    return res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("unexpected chat completion response: ") + e.what());
  }
}

std::unique_ptr<MockLlmClient> MockLlmClient::Scripted(
    std::vector<std::string> responses) {
  auto next = std::make_shared<std::size_t>(0);
  auto script = std::make_shared<std::vector<std::string>>(std::move(responses));
  return std::make_unique<MockLlmClient>([next, script](const Prompt&) {
    if (*next >= script->size()) throw Error("scripted mock ran out of responses");
    return (*script)[(*next)++];
  });
}

std::string MockLlmClient::Complete(const Prompt& prompt) {
  ++calls_;
  return responder_(prompt);
}

}  // namespace kglab
