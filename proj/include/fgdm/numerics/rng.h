// Copyright 2026 The FGDM Authors.
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

#ifndef FGDM_NUMERICS_RNG_H_
#define FGDM_NUMERICS_RNG_H_

#include <array>
#include <cstdint>
#include <string_view>

#include "fgdm/numerics/tensor.h"

namespace fgdm {

// Counter-based generator (Philox-4x32-10). A stream is identified by
// (seed, purpose, index); streams with different identities are
// statistically independent, and the values a consumer sees never depend
// on what other consumers drew before it.
class RngStream {
 public:
  RngStream(uint64_t seed, std::string_view purpose, uint64_t index = 0);

  // Child stream keyed by this stream's identity plus (purpose, index).
  RngStream Derive(std::string_view purpose, uint64_t index = 0) const;

  uint32_t NextU32();
  uint64_t NextU64();
  // Uniform in [0, 1).
  double Uniform();
  // Uniform integer in [lo, hi] inclusive.
  int64_t UniformInt(int64_t lo, int64_t hi);
  bool Bernoulli(double p);
  double Normal();
  Tensor NormalTensor(const Shape& shape);
  Tensor UniformTensor(const Shape& shape, Real lo, Real hi);

  uint64_t key() const { return key_; }

 private:
  explicit RngStream(uint64_t key);
  void Refill();

  uint64_t key_;
  uint64_t counter_ = 0;
  std::array<uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

uint64_t HashString(std::string_view s);
uint64_t MixBits(uint64_t x);

}  // namespace fgdm

#endif  // FGDM_NUMERICS_RNG_H_
