// Copyright 2026 The madiff-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MADIFF__COMMON_HPP_
#define MADIFF__COMMON_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace madiff
{

using Rng = std::mt19937_64;

enum class ActionKind { continuous, discrete };

/// Raised when an operation is invoked on an object in the wrong lifecycle state.
class InvalidState : public std::logic_error
{
public:
  using std::logic_error::logic_error;
};

inline void require_arg(bool ok, const std::string & what)
{
  if (!ok) {
    throw std::invalid_argument(what);
  }
}

/// Fills `out` with i.i.d. N(0, stddev^2) draws.
inline void fill_normal(std::span<double> out, Rng & rng, double stddev = 1.0)
{
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double & v : out) {
    v = stddev * dist(rng);
  }
}

/// Derives an independent stream seed from a base seed and a stream index.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
  std::seed_seq seq{
    static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace madiff

#endif  // MADIFF__COMMON_HPP_
