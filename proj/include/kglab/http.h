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

#ifndef KGLAB_HTTP_H_
#define KGLAB_HTTP_H_

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>

#include "json.hpp"
#include "kglab/common.h"

namespace kglab {

// Transport gave up after the configured number of attempts.
class RetryExhaustedError : public Error {
 public:
  using Error::Error;
};

// Server answered with a status that retrying cannot fix (4xx other than 429).
class HttpStatusError : public Error {
 public:
  HttpStatusError(int status, const std::string& what)
      : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class TimeoutError : public Error {
 public:
  using Error::Error;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds backoff_base{200};
  double backoff_multiplier = 2.0;

  // Delay before retry number `retry` (1-based): base * multiplier^(retry-1).
  std::chrono::milliseconds Delay(int retry) const;
};

bool IsRetryableStatus(int status);

// Client-side token bucket. Acquire() blocks until a token is available.
// One token refills every `interval`; at most `burst` tokens accumulate.
class RateLimiter {
 public:
  explicit RateLimiter(std::chrono::milliseconds interval, int burst = 1);
  void Acquire();

 private:
  using Clock = std::chrono::steady_clock;
  std::mutex mu_;
  std::chrono::milliseconds interval_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
};

struct HttpResponse {
  // 0 when the request never produced a response.
  int status = 0;
  std::string body;
  bool timed_out = false;
  std::string transport_error;
};

// Minimal POST transport. The default implementation speaks HTTP(S) through
// cpp-httplib; tests may substitute their own.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse PostJson(const std::string& path, const std::string& body,
                                const std::string& bearer_token) = 0;
};

// `base_url` such as "https://api.openai.com/v1"; paths are appended to its
// path component.
std::unique_ptr<HttpTransport> MakeHttpTransport(
    const std::string& base_url, std::chrono::milliseconds timeout);

struct RequestStats {
  std::atomic<int> requests{0};
  std::atomic<int> retries{0};
};

// Sends `body` with retries on transient failures (429, 5xx, transport
// errors, timeouts) using exponential backoff. Throws HttpStatusError on a
// non-retryable status, TimeoutError or RetryExhaustedError when attempts run
// out.
nlohmann::json PostJsonWithRetry(HttpTransport& transport,
                                 const std::string& path,
                                 const nlohmann::json& body,
                                 const std::string& bearer_token,
                                 const RetryPolicy& policy,
                                 RateLimiter* limiter = nullptr,
                                 RequestStats* stats = nullptr);

}  // namespace kglab

#endif  // KGLAB_HTTP_H_
