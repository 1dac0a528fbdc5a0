/*
 * Copyright 2026 The idi-fair Authors.
 *
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

#ifndef IDIFAIR_RANDOM_HPP_
#define IDIFAIR_RANDOM_HPP_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>

namespace idifair {

// The standard <random> distributions are implementation-defined, so every
// draw in the library goes through this generator to stay bit-identical
// across compilers and platforms.

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream key from a base seed and a list of tags.
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

/// Counter-based generator: the i-th draw is mix64(key + i * gamma).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed)) {}

  std::uint64_t next_u64() {
    return mix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n) (Lemire's multiply-and-reject).
  std::uint64_t uniform_index(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double exponential() { return -std::log(uniform_pos()); }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      using std::swap;
      swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace idifair

#endif  // IDIFAIR_RANDOM_HPP_
