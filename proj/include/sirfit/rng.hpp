// Copyright 2026 The sirfit Authors.
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

#ifndef SIRFIT_RNG_HPP
#define SIRFIT_RNG_HPP

#include <cstdint>
#include <string_view>

namespace sirfit {

// splitmix64 finalizer.  Good enough avalanche for seed derivation and for
// counter-based draws; not for cryptography.
constexpr uint64_t Mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr uint64_t Fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic generator with two access styles:
//  - sequential Next()/NextDouble() for single-threaded consumers, and
//  - counter-addressed DoubleAt(n)/HashAt(n), pure in (seed, n), so
//    concurrent call sites get reproducible draws regardless of
//    interleaving.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(Mix64(seed)) {}

  // Child generator with an independent stream.  Forking never perturbs the
  // parent's sequence.
  Rng Fork(std::string_view label) const {
    return Rng(Mix64(seed_ ^ Fnv1a(label)));
  }
  Rng Fork(uint64_t n) const { return Rng(Mix64(seed_ ^ Mix64(n + 1))); }

  uint64_t seed() const { return seed_; }

  uint64_t Next() {
    state_ = Mix64(state_);
    return state_;
  }

  // Uniform in [0, 1).  53-bit mantissa.
  double NextDouble() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

  // Uniform in [0, bound).  bound must be nonzero.  Modulo bias is below
  // 2^-32 for the bounds used here.
  uint64_t NextBelow(uint64_t bound) { return Next() % bound; }

  uint64_t HashAt(uint64_t n) const { return Mix64(seed_ ^ Mix64(n + 0x9e37)); }

  double DoubleAt(uint64_t n) const {
    return static_cast<double>(HashAt(n) >> 11) * 0x1.0p-53;
  }

 private:
  uint64_t seed_;
  uint64_t state_;
};

}  // namespace sirfit

#endif  // SIRFIT_RNG_HPP
