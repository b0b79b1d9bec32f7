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


// Built against the float64 instantiation of the numerics and denoiser
// sources so central differences are not swamped by rounding.

#include "doctest.h"
#include "fgdm/denoiser/adapter.h"
#include "fgdm/denoiser/denoiser.h"
#include "fgdm/numerics/gradcheck.h"
#include "fgdm/numerics/ops.h"
#include "fgdm/numerics/rng.h"

namespace fgdm {
namespace {

static_assert(sizeof(Real) == 8);

DenoiserConfig GradConfig() {
  DenoiserConfig c;
  c.base_channels = 2;
  c.channel_mult = {2, 2, 2, 1};
  c.attention_scales = {1};
  c.head_channels = 2;
  c.prompt_dim = 4;
  c.max_tokens = 3;
  c.norm_groups = 2;
  c.time_dim = 4;
  return c;
}

void Randomize(ParamSet& ps, uint64_t seed, Real scale) {
  RngStream rng(seed, "randomize");
  for (Parameter* p : ps.List()) {
    p->value = Scale(rng.NormalTensor(p->value.shape()), scale);
  }
}

TEST_CASE("denoiser gradients match finite differences") {
  const DenoiserConfig c = GradConfig();
  Denoiser net(c, 1);
  REQUIRE(net.params().NumElements() <= 5000);
  Randomize(net.params(), 11, 0.5);
  TextEncoder text(9, c.prompt_dim, c.max_tokens, 2);
  const Tensor z = RngStream(3, "z").NormalTensor({2, 3, 8, 8});
  const Tensor target = RngStream(12, "target").NormalTensor(z.shape());
  const std::vector<int> t = {17, 900};
  auto loss = [&](Tape* tape) {
    const PromptBatch p = text.Encode(nullptr, {{2, 5}, {}});
    const Var eps = net.Forward(tape, Var::Constant(z), t, p).eps;
    return ops::MseLoss(eps, Var::Constant(target));
  };
  auto params = net.params().List(false);
  const GradCheckReport r = CheckGradients(loss, params);
  for (const auto& e : r.entries) {
    INFO(e.name << " " << e.max_rel_error);
    CHECK(e.max_rel_error < 1e-3);
  }
  CHECK(r.passed);
}

TEST_CASE("adapter gradients match finite differences") {
  DenoiserConfig c = GradConfig();
  AdapterBranch adapter(c, 2, 4);
  Randomize(adapter.params(), 5, 0.5);
  const Tensor cond = RngStream(6, "cond").NormalTensor({1, 2, 8, 8});
  const std::vector<int> t = {300};
  std::vector<Tensor> weights;
  for (const Shape& s : Denoiser(c, 0).FeatureShapes(1, 8, 8)) {
    weights.push_back(RngStream(7, "w").NormalTensor(s));
  }
  auto loss = [&](Tape* tape) {
    const auto feats = adapter.Forward(tape, Var::Constant(cond), t);
    Var total = ops::Sum(ops::Mul(feats[0], Var::Constant(weights[0])));
    for (size_t i = 1; i < feats.size(); ++i) {
      total = ops::Add(total, ops::Sum(ops::Mul(feats[i], Var::Constant(weights[i]))));
    }
    return total;
  };
  auto params = adapter.params().List(false);
  const GradCheckReport r = CheckGradients(loss, params);
  CHECK(r.max_rel_error < 1e-3);
}

}  // namespace
}  // namespace fgdm
