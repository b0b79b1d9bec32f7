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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fgdm/diffusion/schedule.h"
#include "fgdm/numerics/rng.h"

namespace fgdm {
namespace {

Tensor Full(const Shape& shape, float v) { return Tensor(shape, v); }

// eps that makes z_t consistent with z0 under the forward process.
Tensor OracleEps(const Tensor& z_t, const Tensor& z0, int t,
                 const NoiseSchedule& s) {
  Tensor out(z_t.shape());
  const double a = std::sqrt(s.alpha_bar(t));
  const double b = std::sqrt(1.0 - s.alpha_bar(t));
  for (int64_t i = 0; i < out.numel(); ++i) {
    out.mutable_data()[i] = static_cast<float>((z_t[i] - a * z0[i]) / b);
  }
  return out;
}

TEST_CASE("schedule tables") {
  NoiseSchedule s;
  CHECK(s.T() == 1000);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(2e-2));
  double prod = 1.0;
  for (int t = 1; t <= s.T(); ++t) {
    CHECK(s.beta(t) > 0.0);
    CHECK(s.beta(t) < 1.0);
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    prod *= 1.0 - s.beta(t);
    CHECK(std::abs(prod - s.alpha_bar(t)) < 1e-7);
  }
  CHECK_THROWS_AS(s.beta(0), std::out_of_range);
  CHECK_THROWS_AS(s.alpha_bar(1001), std::out_of_range);
}

TEST_CASE("forward noise examples") {
  NoiseSchedule s;
  const Tensor z0 = Tensor::FromList({0.3f, -0.7f});
  const Tensor eps = Tensor::FromList({1.5f, 0.25f});
  CHECK(ForwardNoise(z0, 0, eps, s).BitwiseEqual(z0));
  // Hand-evaluated: 0.5 * 1 + sqrt(0.75) * (-1).
  ScheduleConfig c;
  c.steps = 1;
  c.beta_start = c.beta_end = 0.75;
  NoiseSchedule one(c);
  CHECK(one.alpha_bar(1) == doctest::Approx(0.25));
  const Tensor z = ForwardNoise(Tensor::FromList({1.0f}), 1,
                                Tensor::FromList({-1.0f}), one);
  CHECK(z[0] == doctest::Approx(-0.3660254).epsilon(1e-6));
  // Near the end of the chain the signal is almost gone.
  const Tensor zT = ForwardNoise(z0, 1000, eps, s);
  CHECK(MaxAbsDiff(zT, eps) < 0.01f);
  CHECK_THROWS(ForwardNoise(z0, 1001, eps, s));
  CHECK_THROWS(ForwardNoise(z0, 3, Tensor::FromList({1.0f}), s));
}

TEST_CASE("ddpm step reductions") {
  NoiseSchedule s;
  const Tensor z = Tensor::FromList({0.8f, -0.2f, 1.1f});
  const Tensor zero(z.shape());
  const int t = 500;
  const Tensor out = DdpmStep(z, zero, t, zero, s);
  for (int i = 0; i < 3; ++i) {
    CHECK(out[i] == doctest::Approx(z[i] / std::sqrt(1.0 - s.beta(t))).epsilon(1e-6));
  }
  ScheduleConfig tiny;
  tiny.beta_start = tiny.beta_end = 1e-9;
  NoiseSchedule flat(tiny);
  CHECK(MaxAbsDiff(DdpmStep(z, Tensor::FromList({0.5f, 0.1f, -2.0f}), 10,
                            zero, flat),
                   z) < 1e-3f);
  CHECK_THROWS_AS(DdpmStep(z, zero, 0, zero, s), std::out_of_range);
}

TEST_CASE("ddpm chain with oracle noise returns to z0") {
  NoiseSchedule s;
  RngStream rng(4, "ddpm-chain");
  const Tensor z0 = rng.UniformTensor({64}, -1.0f, 1.0f);
  Tensor z = rng.NormalTensor({64});
  for (int t = s.T(); t >= 1; --t) {
    const Tensor eps = OracleEps(z, z0, t, s);
    z = DdpmStep(z, eps, t, rng.NormalTensor({64}), s);
  }
  CHECK(MeanSquaredDiff(z, z0) < 1e-4f);
}

TEST_CASE("ddim with oracle noise predicts z0 at every step") {
  NoiseSchedule s;
  RngStream rng(9, "ddim");
  const Tensor z0 = rng.UniformTensor({32}, -1.0f, 1.0f);
  Tensor z = ForwardNoise(z0, s.T(), rng.NormalTensor({32}), s);
  const auto ts = DdimTimesteps(s.T(), 20);
  CHECK(ts.front() == 1000);
  CHECK(ts.back() == 50);
  for (size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    const int prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    const Tensor eps = OracleEps(z, z0, t, s);
    CHECK(MaxAbsDiff(PredictX0(z, eps, t, s), z0) < 1e-4f);
    const Tensor a = DdimStep(z, eps, t, prev, 0.0, Tensor(), s);
    const Tensor b = DdimStep(z, eps, t, prev, 0.0, Tensor(), s);
    CHECK(a.BitwiseEqual(b));
    z = a;
  }
  CHECK(MeanSquaredDiff(z, z0) < 1e-8f);
}

TEST_CASE("clipped ddim step matches the clamped closed form") {
  NoiseSchedule s;
  const int t = 900, prev = 850;
  // eps = 0 makes x0 = z / sqrt(abar_t), far outside [-1, 1].
  const Tensor z = Tensor::FromList({0.9f, -0.7f, 0.01f});
  const Tensor eps = Tensor::FromList({0.0f, 0.0f, 0.0f});
  const Tensor clipped = DdimStep(z, eps, t, prev, 0.0, Tensor(), s, true);
  const Tensor plain = DdimStep(z, eps, t, prev, 0.0, Tensor(), s, false);
  const double sa = std::sqrt(s.alpha_bar(t)), sb = std::sqrt(1.0 - s.alpha_bar(t));
  const double ap = s.alpha_bar(prev);
  for (int i = 0; i < 3; ++i) {
    const double x0 = std::clamp(z[i] / sa, -1.0, 1.0);
    const double e = (z[i] - sa * x0) / sb;
    CHECK(clipped[i] == doctest::Approx(std::sqrt(ap) * x0 + std::sqrt(1.0 - ap) * e).epsilon(1e-6));
    CHECK(plain[i] == doctest::Approx(z[i] * std::sqrt(ap) / sa).epsilon(1e-6));
  }
  CHECK(std::abs(clipped[0]) < std::abs(plain[0]));
  // In-range predictions are untouched by the clamp, up to the rounding of
  // recomputing eps from x0.
  const Tensor small = Tensor::FromList({0.01f, -0.012f, 0.0f});
  for (int i = 0; i < 3; ++i) REQUIRE(std::abs(small[i] / sa) < 1.0);
  CHECK(MaxAbsDiff(DdimStep(small, eps, t, prev, 0.0, Tensor(), s, true),
                   DdimStep(small, eps, t, prev, 0.0, Tensor(), s, false)) < 1e-7f);
}

TEST_CASE("forward noise then x0 prediction recovers z0 for every t") {
  NoiseSchedule s;
  RngStream rng(2, "x0");
  const Tensor z0 = rng.UniformTensor({16}, -1.0f, 1.0f);
  const Tensor eps = rng.NormalTensor({16});
  for (int t = 1; t <= s.T(); ++t) {
    const Tensor x0 = PredictX0(ForwardNoise(z0, t, eps, s), eps, t, s);
    // Rounding of z_t is amplified by 1/sqrt(abar_t).
    const float tol = static_cast<float>(4e-7 / std::sqrt(s.alpha_bar(t)));
    CHECK(MaxAbsDiff(x0, z0) <= tol);
  }
}

TEST_CASE("ddim eta=1 variance matches closed form") {
  NoiseSchedule s;
  const int t = 600, prev = 550;
  const double sigma = DdimSigma(t, prev, 1.0, s);
  // With eta = 1 the DDIM variance is the DDPM posterior variance.
  const double posterior = (1.0 - s.alpha_bar(prev)) / (1.0 - s.alpha_bar(t)) *
                           (1.0 - s.alpha_bar(t) / s.alpha_bar(prev));
  CHECK(sigma * sigma == doctest::Approx(posterior).epsilon(1e-12));
  RngStream rng(1, "mc");
  const Tensor z = Tensor::FromList({0.4f});
  const Tensor eps = Tensor::FromList({-0.3f});
  const int n = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = DdimStep(z, eps, t, prev, 1.0, rng.NormalTensor({1}), s)[0];
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double var = (sum2 - n * mean * mean) / (n - 1);
  CHECK(std::abs(var / (sigma * sigma) - 1.0) < 0.03);
  CHECK_THROWS_AS(DdimStep(z, eps, 10, 10, 0.0, Tensor(), s), std::invalid_argument);
  CHECK_THROWS_AS(DdimStep(z, eps, 10, 20, 0.0, Tensor(), s), std::invalid_argument);
}

TEST_CASE("ddim timesteps") {
  CHECK(DdimTimesteps(1000, 1) == std::vector<int>{1000});
  CHECK(DdimTimesteps(10, 10) == std::vector<int>{10, 9, 8, 7, 6, 5, 4, 3, 2, 1});
  CHECK(DdimTimesteps(1000, 4) == std::vector<int>{1000, 750, 500, 250});
  CHECK_THROWS(DdimTimesteps(10, 0));
  CHECK_THROWS(DdimTimesteps(10, 11));
}

TEST_CASE("cfg combine") {
  const Tensor c = Full({3}, 1.0f);
  const Tensor u = Full({3}, 0.0f);
  CHECK(CfgCombine(c, u, 1.0).BitwiseEqual(c));
  CHECK(CfgCombine(c, u, 0.0).BitwiseEqual(u));
  CHECK(CfgCombine(c, u, 7.5)[0] == 7.5f);
  CHECK_THROWS(CfgCombine(c, Full({2}, 0.0f), 1.0));
  // Affine in the scale; dyadic inputs keep the arithmetic exact.
  RngStream rng(3, "cfg");
  Tensor a({50}), b({50});
  for (int i = 0; i < 50; ++i) {
    a.mutable_data()[i] = static_cast<float>(rng.UniformInt(-64, 64)) / 16.0f;
    b.mutable_data()[i] = static_cast<float>(rng.UniformInt(-64, 64)) / 16.0f;
  }
  const Tensor o0 = CfgCombine(a, b, 0.0);
  const Tensor o1 = CfgCombine(a, b, 1.0);
  for (double s : {0.5, 2.0, 7.5, 3.25}) {
    const Tensor os = CfgCombine(a, b, s);
    for (int i = 0; i < 50; ++i) {
      CHECK(os[i] - o0[i] == static_cast<float>(s * (o1[i] - o0[i])));
    }
  }
}

TEST_CASE("diffusion loss") {
  const Tensor e = Tensor::FromList({1, 0});
  CHECK(DiffusionLoss(e, e) == 0.0);
  CHECK(DiffusionLoss(e, Tensor::FromList({0, 0})) == 0.5);
  RngStream rng(8, "loss");
  const Tensor a = rng.NormalTensor({1000});
  const Tensor b = rng.NormalTensor({1000});
  double oracle = 0.0;
  for (int i = 0; i < 1000; ++i) oracle += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  oracle /= 1000.0;
  CHECK(std::abs(DiffusionLoss(a, b) - oracle) < 1e-6);
  CHECK(DiffusionLoss(a, b) > 0.0);
  CHECK_THROWS(DiffusionLoss(a, Tensor::FromList({1})));
}

TEST_CASE("sampler config validation") {
  SamplerConfig c;
  CHECK_NOTHROW(c.Validate(1000));
  c.steps = 0;
  CHECK_THROWS(c.Validate(1000));
  c.steps = 10;
  c.eta = 1.5;
  CHECK_THROWS(c.Validate(1000));
  c.eta = 0.0;
  c.guidance_scale = -1.0;
  CHECK_THROWS(c.Validate(1000));
}

}  // namespace
}  // namespace fgdm
