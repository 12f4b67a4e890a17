// respr/rng.h

// Copyright 2026  The respr Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef RESPR_RNG_H_
#define RESPR_RNG_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace respr {

// Deterministic random source. std::mt19937_64 output is fixed by the
// standard, and all distributions below are implemented here rather than
// with std::*_distribution (whose streams are implementation-defined), so
// the same seed yields the same values on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1).
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [lo, hi], inclusive. Fixed-point multiply keeps the
  // mapping platform-independent.
  int64_t UniformInt(int64_t lo, int64_t hi) {
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t x = engine_();
    uint64_t hi64 = static_cast<uint64_t>(
        (static_cast<unsigned __int128>(x) * range) >> 64);
    return lo + static_cast<int64_t>(hi64);
  }

  // Standard normal via Box-Muller; the spare value is cached.
  double Gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = Uniform();
    double u2 = Uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Seed derivation for independent per-item streams (FNV-1a over the key,
  // then splitmix64 finalization).
  static uint64_t Derive(uint64_t seed, std::string_view key) {
    uint64_t h = 1469598103934665603ull ^ seed;
    for (char c : key) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return Mix(h);
  }

  static uint64_t Derive(uint64_t seed, uint64_t a, uint64_t b = 0) {
    return Mix(Mix(seed + 0x9e3779b97f4a7c15ull + a) ^ (b * 0xbf58476d1ce4e5b9ull + 1));
  }

 private:
  static uint64_t Mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace respr

#endif  // RESPR_RNG_H_
