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

#include "fgdm/numerics/rng.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fgdm {
namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

std::array<uint32_t, 4> Philox4x32(std::array<uint32_t, 4> ctr,
                                   std::array<uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const uint64_t p0 = static_cast<uint64_t>(kPhiloxM0) * ctr[0];
    const uint64_t p1 = static_cast<uint64_t>(kPhiloxM1) * ctr[2];
    const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
    const uint32_t lo0 = static_cast<uint32_t>(p0);
    const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
    const uint32_t lo1 = static_cast<uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

}  // namespace

uint64_t MixBits(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

uint64_t HashString(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

RngStream::RngStream(uint64_t key) : key_(key) {}

RngStream::RngStream(uint64_t seed, std::string_view purpose, uint64_t index)
    : key_(MixBits(MixBits(seed) ^ MixBits(HashString(purpose) + index))) {}

RngStream RngStream::Derive(std::string_view purpose, uint64_t index) const {
  return RngStream(MixBits(key_ ^ MixBits(HashString(purpose) + index)));
}

void RngStream::Refill() {
  block_ = Philox4x32(
      {static_cast<uint32_t>(counter_), static_cast<uint32_t>(counter_ >> 32),
       0u, 0u},
      {static_cast<uint32_t>(key_), static_cast<uint32_t>(key_ >> 32)});
  ++counter_;
  used_ = 0;
}

uint32_t RngStream::NextU32() {
  if (used_ == 4) Refill();
  return block_[used_++];
}

uint64_t RngStream::NextU64() {
  const uint64_t hi = NextU32();
  return (hi << 32) | NextU32();
}

double RngStream::Uniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

int64_t RngStream::UniformInt(int64_t lo, int64_t hi) {
  if (hi < lo) throw std::invalid_argument("UniformInt: empty range");
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  // Rejection sampling keeps the draw exactly uniform.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t r;
  do {
    r = NextU64();
  } while (r >= limit);
  return lo + static_cast<int64_t>(r % span);
}

bool RngStream::Bernoulli(double p) { return Uniform() < p; }

double RngStream::Normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = Uniform();
  while (u1 <= 0.0) u1 = Uniform();
  const double u2 = Uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Tensor RngStream::NormalTensor(const Shape& shape) {
  Tensor t(shape);
  for (Real& v : t.mutable_data()) v = static_cast<Real>(Normal());
  return t;
}

Tensor RngStream::UniformTensor(const Shape& shape, Real lo, Real hi) {
  Tensor t(shape);
  for (Real& v : t.mutable_data()) {
    v = lo + static_cast<Real>(Uniform()) * (hi - lo);
  }
  return t;
}

}  // namespace fgdm
