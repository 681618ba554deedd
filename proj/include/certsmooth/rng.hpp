/* Copyright 2026 the certsmooth authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Counter-based deterministic RNG. Every consumer derives its own stream key
// from (master seed, example id, stream tag, batch index), so draws are
// reproducible bit-for-bit regardless of evaluation order or worker count.

#pragma once

#include <cmath>
#include <cstdint>

namespace certsmooth::rng {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 finalizer: a bijective avalanche mix on 64 bits.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a child stream key. Nested calls implement the
/// mix(seed, id, tag, batch) derivation chain.
inline constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed + kGoldenGamma * (tag + 1));
}

inline constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                                      std::uint64_t b) {
  return derive(derive(seed, a), b);
}

inline constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                                      std::uint64_t b, std::uint64_t c) {
  return derive(derive(derive(seed, a), b), c);
}

/// Fixed stream tags. Distinct tags guarantee disjoint draws for the
/// selection and estimation passes and for every other consumer.
enum Stream : std::uint64_t {
  kDatasetStream = 1,
  kSelectionStream = 2,
  kEstimationStream = 3,
  kAugmentStream = 4,
  kShuffleStream = 5,
  kInitStream = 6,
  kDataGenStream = 7,
  kVarianceStream = 8,
  kBenchStream = 9,
};

/// SplitMix64 sequence addressed by a stream key. Gaussian variates come from
/// Box-Muller with the spare cached.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in (0, 1]; safe as a log argument.
  double next_double_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal variate.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_double_open();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * kPi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace certsmooth::rng
