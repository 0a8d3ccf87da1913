// Copyright 2026 The ltu-eval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LTU_RNG_H_
#define LTU_RNG_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "absl/strings/string_view.h"

namespace ltu {

// Mixes two 64-bit values into a well-distributed seed (splitmix64 finalizer
// applied to each input). Used to derive independent per-round and
// per-component streams from one master seed.
uint64_t DeriveSeed(uint64_t master, uint64_t index);

// Same, keyed by a stream name (FNV-1a of `tag`).
uint64_t DeriveSeed(uint64_t master, absl::string_view tag);

// Seedable generator with a portable output sequence.
//
// The engine is std::mt19937_64, whose output is fixed by the standard. The
// standard library distributions are implementation-defined, so every
// transform used by this project (uniform reals, bounded integers, normals,
// shuffles) is implemented here on top of raw engine output.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double Uniform();

  // Uniform integer in [0, n). Requires n > 0.
  uint64_t UniformInt(uint64_t n);

  // Standard normal via Box-Muller; the second variate is cached.
  double Normal();

  bool Coin() { return (NextU64() >> 63) != 0; }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<size_t> Permutation(size_t n);

  template <typename T>
  void Shuffle(std::vector<T>& values) {
    for (size_t i = values.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(UniformInt(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace ltu

#endif  // LTU_RNG_H_
