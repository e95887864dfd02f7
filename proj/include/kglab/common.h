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

#ifndef KGLAB_COMMON_H_
#define KGLAB_COMMON_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace kglab {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Which side of a (head, relation, tail) query is missing.
enum class Direction { kPredictTail, kPredictHead };

std::string_view DirectionName(Direction d);
Direction ParseDirection(std::string_view name);

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files or unknown identifiers.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration, detected before any work is done.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numerical failure (non-finite values, shape mismatches).
class NumericError : public Error {
 public:
  using Error::Error;
};

// 64-bit FNV-1a followed by a splitmix64 finalizer. Stable across platforms,
// used wherever a hash must be reproducible from run to run.
std::uint64_t StableHash(std::string_view text, std::uint64_t seed);

}  // namespace kglab

#endif  // KGLAB_COMMON_H_
