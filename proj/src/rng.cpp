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

#include "cembed/rng.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "cembed/errors.hpp"

namespace cembed {

double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t SeededRng::uniform_index(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("uniform_index: n must be positive");
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double SeededRng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

SeededRng SeededRng::split(std::uint64_t stream_id) {
  // splitmix64 finalizer over (next output, stream id)
  std::uint64_t z = engine_() ^ (stream_id + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return SeededRng(z);
}

std::string SeededRng::serialize() const {
  std::ostringstream os;
  std::uint64_t bits = 0;
  std::memcpy(&bits, &cached_, sizeof bits);
  os << seed_ << ' ' << (has_cached_ ? 1 : 0) << ' ' << bits << ' ' << engine_;
  return os.str();
}

SeededRng SeededRng::deserialize(const std::string& state) {
  std::istringstream is(state);
  std::uint64_t seed = 0, bits = 0;
  int cached = 0;
  is >> seed >> cached >> bits;
  SeededRng rng(seed);
  is >> rng.engine_;
  if (!is) throw FormatError("SeededRng: malformed state string");
  rng.has_cached_ = cached != 0;
  std::memcpy(&rng.cached_, &bits, sizeof bits);
  return rng;
}

}  // namespace cembed
