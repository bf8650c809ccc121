/*
 * Copyright 2026 The cembed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace cembed {

/// Seeded pseudo-random stream with a platform-independent output sequence.
///
/// The engine is std::mt19937_64, whose output is fixed by the standard. The
/// uniform and Gaussian transforms are implemented here rather than through
/// <random> distributions, whose algorithms differ between standard libraries.
/// A stream is single-owner; do not share one across threads.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Derive an independent child stream (e.g. one per epoch or per worker).
  SeededRng split(std::uint64_t stream_id);

  /// Text snapshot of the full generator state, including the cached normal.
  std::string serialize() const;
  static SeededRng deserialize(const std::string& state);

  friend bool operator==(const SeededRng& a, const SeededRng& b) {
    return a.engine_ == b.engine_ && a.has_cached_ == b.has_cached_ &&
           (!a.has_cached_ || a.cached_ == b.cached_);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace cembed
