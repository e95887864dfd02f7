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

#include "kglab/encoders.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <sstream>

namespace kglab {
namespace {

std::string GetEnv(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

}  // namespace

std::vector<Vector> EncoderProvider::EncodeBatch(
    std::span<const TokenSequence> seqs) const {
  std::vector<Vector> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(Encode(s));
  return out;
}

Vector HashEncode(const TokenSequence& seq, std::size_t d, std::uint64_t seed) {
  if (d < 2) throw ConfigError("hash encoder dimension must be at least 2");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(d));
  for (const Token& t : seq.items) {
    const std::uint64_t h = StableHash(t.Render(), seed);
    const auto bucket = static_cast<Eigen::Index>(h % d);
    v[bucket] += ((h >> 40) & 1) ? 1.0 : -1.0;
  }
  const double norm = v.norm();
  if (norm == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / norm;
}

HashEncoder::HashEncoder(std::size_t d, std::uint64_t seed) : d_(d), seed_(seed) {
  if (d < 2) throw ConfigError("hash encoder dimension must be at least 2");
}

Vector HashEncoder::Encode(const TokenSequence& seq) const {
  return HashEncode(seq, d_, seed_);
}

EmbeddingStore EmbeddingStore::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("d=", 0) != 0) {
    throw DataError(path.string() + ": first line must be \"d=<dim>\"");
  }
  std::size_t d = 0;
  try {
    d = std::stoul(line.substr(2));
  } catch (const std::exception&) {
    throw DataError(path.string() + ": bad dimension header '" + line + "'");
  }
  if (d == 0) throw DataError(path.string() + ": dimension must be positive");
  EmbeddingStore store(d);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected key<TAB>values");
    }
    std::istringstream values(line.substr(tab + 1));
    std::vector<double> row;
    std::string tok;
    while (values >> tok) row.push_back(std::strtod(tok.c_str(), nullptr));
    if (row.size() != d) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": row has " + std::to_string(row.size()) +
                      " values, header says d=" + std::to_string(d));
    }
    store.Insert(line.substr(0, tab),
                 Eigen::Map<Vector>(row.data(), static_cast<Eigen::Index>(d)));
  }
  return store;
}

void EmbeddingStore::Save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding file: " + path.string());
  out << "d=" << d_ << "\n";
  char buf[32];
  for (const auto& key : order_) {
    out << key << '\t';
    const Vector& v = rows_.at(key);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
      if (i > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing embedding file: " + path.string());
}

bool EmbeddingStore::contains(const std::string& key) const {
  return rows_.contains(key);
}

const Vector& EmbeddingStore::Lookup(const std::string& key) const {
  auto it = rows_.find(key);
  if (it == rows_.end()) throw DataError("missing embedding key: " + key);
  return it->second;
}

void EmbeddingStore::Insert(const std::string& key, Vector v) {
  if (static_cast<std::size_t>(v.size()) != d_) {
    throw NumericError("embedding for '" + key + "' has dimension " +
                       std::to_string(v.size()) + ", store expects " +
                       std::to_string(d_));
  }
  if (!v.allFinite()) throw NumericError("non-finite embedding for " + key);
  if (rows_.insert_or_assign(key, std::move(v)).second) order_.push_back(key);
}

Vector FileStoreEncoder::Encode(const TokenSequence& seq) const {
  return store_.Lookup(seq.Render());
}

Vector FileStoreEncoder::EncodeKey(const std::string& key) const {
  return store_.Lookup(key);
}

RemoteEncoderConfig RemoteEncoderConfig::FromEnvironment() {
  RemoteEncoderConfig cfg;
  cfg.endpoint = GetEnv("KGLAB_API_BASE");
  cfg.api_key = GetEnv("KGLAB_API_KEY");
  return cfg;
}

void RemoteEncoderConfig::Validate() const {
  if (endpoint.empty()) {
    throw ConfigError("remote encoder needs an endpoint (KGLAB_API_BASE)");
  }
  if (api_key.empty()) {
    throw ConfigError("remote encoder needs a credential (KGLAB_API_KEY)");
  }
  if (dimension == 0) throw ConfigError("remote encoder dimension must be set");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_in_flight == 0) throw ConfigError("max_in_flight must be positive");
}

RemoteEncoder::RemoteEncoder(RemoteEncoderConfig cfg)
    : RemoteEncoder(cfg, nullptr) {}

RemoteEncoder::RemoteEncoder(RemoteEncoderConfig cfg,
                             std::shared_ptr<HttpTransport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)) {
  cfg_.Validate();
  if (!transport_) transport_ = MakeHttpTransport(cfg_.endpoint, cfg_.timeout);
  limiter_ = std::make_unique<RateLimiter>(cfg_.min_request_interval);
  stats_ = std::make_unique<RequestStats>();
}

Vector RemoteEncoder::Encode(const TokenSequence& seq) const {
  return EncodeTexts({seq.Render()}).front();
}

std::vector<Vector> RemoteEncoder::EncodeBatch(
    std::span<const TokenSequence> seqs) const {
  std::vector<std::string> texts;
  texts.reserve(seqs.size());
  for (const auto& s : seqs) texts.push_back(s.Render());
  return EncodeTexts(texts);
}

std::vector<Vector> RemoteEncoder::EncodeTexts(
    const std::vector<std::string>& texts) const {
  std::vector<std::vector<std::string>> batches;
  for (std::size_t i = 0; i < texts.size(); i += cfg_.batch_size) {
    const auto end = std::min(texts.size(), i + cfg_.batch_size);
    batches.emplace_back(texts.begin() + static_cast<std::ptrdiff_t>(i),
                         texts.begin() + static_cast<std::ptrdiff_t>(end));
  }
  std::vector<Vector> out;
  out.reserve(texts.size());
  // Waves of at most max_in_flight concurrent requests; results are
  // collected in batch order.
  for (std::size_t w = 0; w < batches.size(); w += cfg_.max_in_flight) {
    const auto wave_end = std::min(batches.size(), w + cfg_.max_in_flight);
    std::vector<std::future<std::vector<Vector>>> pending;
    for (std::size_t b = w; b < wave_end; ++b) {
      pending.push_back(std::async(std::launch::async, [this, &batches, b] {
        return SendBatch(batches[b]);
      }));
    }
    for (auto& f : pending) {
      for (auto& v : f.get()) out.push_back(std::move(v));
    }
  }
  return out;
}

std::vector<Vector> RemoteEncoder::SendBatch(
    const std::vector<std::string>& texts) const {
  nlohmann::json req = {{"input", texts}, {"model", cfg_.model}};
  nlohmann::json res = PostJsonWithRetry(*transport_, "/embeddings", req,
                                         cfg_.api_key, cfg_.retry,
                                         limiter_.get(), stats_.get());
  if (!res.contains("data") || !res["data"].is_array()) {
    throw Error("embedding response has no data array");
  }
  std::vector<Vector> out(texts.size());
  std::vector<bool> filled(texts.size(), false);
  for (const auto& item : res["data"]) {
    const auto index = item.at("index").get<std::size_t>();
    const auto values = item.at("embedding").get<std::vector<double>>();
    if (index >= texts.size() || filled[index]) {
      throw Error("embedding response has a bad index " +
                  std::to_string(index));
    }
    if (values.size() != cfg_.dimension) {
      throw NumericError("remote embedding has dimension " +
                         std::to_string(values.size()) + ", expected " +
                         std::to_string(cfg_.dimension));
    }
    out[index] = Eigen::Map<const Vector>(
        values.data(), static_cast<Eigen::Index>(values.size()));
    filled[index] = true;
  }
  for (std::size_t i = 0; i < filled.size(); ++i) {
    if (!filled[i]) {
      throw Error("embedding response is missing index " + std::to_string(i));
    }
  }
  return out;
}

}  // namespace kglab
