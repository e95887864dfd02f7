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

#include "kglab/http.h"

#include <algorithm>
#include <cmath>
#include <thread>

#include "httplib.h"

namespace kglab {
namespace {

class HttplibTransport : public HttpTransport {
 public:
  HttplibTransport(const std::string& base_url,
                   std::chrono::milliseconds timeout)
      : timeout_(timeout) {
    // Split "scheme://host[:port]/path" into origin and path prefix.
    const auto scheme_end = base_url.find("://");
    const auto path_start = base_url.find(
        '/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    origin_ = base_url.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (!httplib::Client(origin_).is_valid()) {
      throw ConfigError("unsupported endpoint: " + base_url);
    }
  }

  // A fresh client per call keeps concurrent requests independent.
  HttpResponse PostJson(const std::string& path, const std::string& body,
                        const std::string& bearer_token) override {
    httplib::Client client(origin_);
    const auto secs =
        std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!bearer_token.empty()) {
      headers.emplace("Authorization", "Bearer " + bearer_token);
    }
    HttpResponse out;
    auto res = client.Post(prefix_ + path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      out.timed_out = err == httplib::Error::Read ||
                      err == httplib::Error::ConnectionTimeout;
      out.transport_error = httplib::to_string(err);
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }

 private:
  std::chrono::milliseconds timeout_;
  std::string origin_;
  std::string prefix_;
};

}  // namespace

std::chrono::milliseconds RetryPolicy::Delay(int retry) const {
  const double scale = std::pow(backoff_multiplier, std::max(0, retry - 1));
  return std::chrono::milliseconds(
      static_cast<std::int64_t>(backoff_base.count() * scale));
}

bool IsRetryableStatus(int status) {
  return status == 408 || status == 429 || status >= 500;
}

RateLimiter::RateLimiter(std::chrono::milliseconds interval, int burst)
    : interval_(interval),
      burst_(std::max(1, burst)),
      tokens_(burst_),
      last_(Clock::now()) {}

void RateLimiter::Acquire() {
  std::unique_lock<std::mutex> lock(mu_);
  while (true) {
    const auto now = Clock::now();
    if (interval_.count() > 0) {
      const double refill =
          std::chrono::duration<double, std::milli>(now - last_).count() /
          static_cast<double>(interval_.count());
      tokens_ = std::min(burst_, tokens_ + refill);
    } else {
      tokens_ = burst_;
    }
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double, std::milli>(
        (1.0 - tokens_) * static_cast<double>(interval_.count()));
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

std::unique_ptr<HttpTransport> MakeHttpTransport(
    const std::string& base_url, std::chrono::milliseconds timeout) {
  return std::make_unique<HttplibTransport>(base_url, timeout);
}

nlohmann::json PostJsonWithRetry(HttpTransport& transport,
                                 const std::string& path,
                                 const nlohmann::json& body,
                                 const std::string& bearer_token,
                                 const RetryPolicy& policy,
                                 RateLimiter* limiter, RequestStats* stats) {
  const std::string payload = body.dump();
  const int attempts = std::max(1, policy.max_attempts);
  std::string last_failure;
  bool last_timed_out = false;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (attempt > 1) {
      if (stats) ++stats->retries;
      std::this_thread::sleep_for(policy.Delay(attempt - 1));
    }
    if (limiter) limiter->Acquire();
    if (stats) ++stats->requests;
    HttpResponse res = transport.PostJson(path, payload, bearer_token);
    if (res.status == 0) {
      last_timed_out = res.timed_out;
      last_failure = "transport error: " + res.transport_error;
      continue;
    }
    if (res.status >= 200 && res.status < 300) {
      try {
        return nlohmann::json::parse(res.body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed JSON response: ") + e.what());
      }
    }
    if (!IsRetryableStatus(res.status)) {
      throw HttpStatusError(res.status,
                            "request to " + path + " failed with status " +
                                std::to_string(res.status) + ": " + res.body);
    }
    last_timed_out = false;
    last_failure = "status " + std::to_string(res.status);
  }
  const std::string msg = "request to " + path + " failed after " +
                          std::to_string(attempts) + " attempts (" +
                          last_failure + ")";
  if (last_timed_out) throw TimeoutError(msg);
  throw RetryExhaustedError(msg);
}

}  // namespace kglab
