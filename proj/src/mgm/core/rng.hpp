// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "mgm/core/tensor.hpp"

namespace mgm {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic seed derivation. All randomness in the project is keyed by
// (root seed, site tag, counters), so replay and checkpoint-resume never
// depend on engine state carried across steps.
inline uint64_t mix_seed(uint64_t seed, std::string_view tag) {
  return splitmix64(seed ^ fnv1a64(tag));
}
inline uint64_t mix_seed(uint64_t seed, std::string_view tag, uint64_t a) {
  return splitmix64(mix_seed(seed, tag) ^ splitmix64(a));
}
inline uint64_t mix_seed(uint64_t seed, std::string_view tag, uint64_t a, uint64_t b) {
  return splitmix64(mix_seed(seed, tag, a) ^ splitmix64(b + 0x51ed2701ULL));
}
inline uint64_t mix_seed(uint64_t seed, std::string_view tag, uint64_t a, uint64_t b,
                         uint64_t c) {
  return splitmix64(mix_seed(seed, tag, a, b) ^ splitmix64(c + 0x2545f491ULL));
}

// mt19937_64 wrapper with self-contained uniform/normal transforms.
// std::normal_distribution is implementation-defined; Box-Muller here keeps
// draws identical across standard libraries.
class RandomEngine {
 public:
  explicit RandomEngine(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0,1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [lo, hi)
  int64_t randint(int64_t lo, int64_t hi) {
    MGM_CHECK(hi > lo, "randint: empty range");
    return lo + static_cast<int64_t>(gen_() % static_cast<uint64_t>(hi - lo));
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void fill_normal(Tensor<T>& t, T mean, T stddev) {
    for (auto& v : t.data) v = static_cast<T>(normal(mean, stddev));
  }
  template <typename T>
  void fill_uniform(Tensor<T>& t, T lo, T hi) {
    for (auto& v : t.data) v = static_cast<T>(uniform(lo, hi));
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mgm
