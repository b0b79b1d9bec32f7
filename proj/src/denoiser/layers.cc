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

#include "denoiser/layers.h"

#include <cmath>

#include "fgdm/denoiser/denoiser.h"
#include "fgdm/numerics/ops.h"

namespace fgdm::nn {

void InitConv(ParamSet& ps, const std::string& name, int in, int out, int k,
              RngStream& rng, Real gain, bool zero) {
  Tensor w({out, in, k, k});
  if (!zero) {
    const Real s = gain / std::sqrt(static_cast<Real>(in * k * k));
    w = Scale(rng.NormalTensor({out, in, k, k}), s);
  }
  ps.Add(name + "/w", std::move(w));
  ps.Add(name + "/b", Tensor({out}));
}

Var Conv(Tape* tape, const ParamSet& ps, const std::string& name,
         const Var& x, int stride) {
  const Parameter& w = ps.Get(name + "/w");
  const int k = static_cast<int>(w.value.dim(2));
  return ops::Conv2d(x, Bind(tape, w), Bind(tape, ps.Get(name + "/b")), stride,
                     k / 2);
}

void InitDense(ParamSet& ps, const std::string& name, int in, int out,
               RngStream& rng, Real gain) {
  ps.Add(name + "/w", Scale(rng.NormalTensor({in, out}),
                            gain / std::sqrt(static_cast<Real>(in))));
  ps.Add(name + "/b", Tensor({out}));
}

Var Dense(Tape* tape, const ParamSet& ps, const std::string& name,
          const Var& x) {
  return ops::Linear(x, Bind(tape, ps.Get(name + "/w")),
                     Bind(tape, ps.Get(name + "/b")));
}

void InitNorm(ParamSet& ps, const std::string& name, int channels) {
  ps.Add(name + "/gamma", Tensor({channels}, 1.0f));
  ps.Add(name + "/beta", Tensor({channels}));
}

Var Norm(Tape* tape, const ParamSet& ps, const std::string& name,
         const Var& x, int groups) {
  return ops::GroupNorm(x, groups, Bind(tape, ps.Get(name + "/gamma")),
                        Bind(tape, ps.Get(name + "/beta")));
}

void InitTimeMlp(ParamSet& ps, const std::string& name, int in_dim,
                 int time_dim, RngStream& rng) {
  InitDense(ps, name + "/fc1", in_dim, time_dim, rng);
  InitDense(ps, name + "/fc2", time_dim, time_dim, rng);
}

Var TimeMlp(Tape* tape, const ParamSet& ps, const std::string& name,
            std::span<const int> t, int in_dim) {
  const Var emb = Var::Constant(TimestepEmbedding(t, in_dim));
  const Var h = ops::Silu(Dense(tape, ps, name + "/fc1", emb));
  return ops::Silu(Dense(tape, ps, name + "/fc2", h));
}

void InitResBlock(ParamSet& ps, const std::string& name, int in, int out,
                  int time_dim, RngStream& rng) {
  InitNorm(ps, name + "/norm1", in);
  InitConv(ps, name + "/conv1", in, out, 3, rng);
  InitDense(ps, name + "/time", time_dim, out, rng);
  InitNorm(ps, name + "/norm2", out);
  InitConv(ps, name + "/conv2", out, out, 3, rng);
  if (in != out) InitConv(ps, name + "/skip", in, out, 1, rng);
}

Var ResBlock(Tape* tape, const ParamSet& ps, const std::string& name,
             const Var& x, const Var& time, int groups) {
  Var h = Conv(tape, ps, name + "/conv1",
               ops::Silu(Norm(tape, ps, name + "/norm1", x, groups)));
  const int64_t out = h.dim(1);
  const Var tproj = ops::Reshape(Dense(tape, ps, name + "/time", time),
                                 {h.dim(0), out, 1, 1});
  h = ops::Add(h, tproj);
  h = Conv(tape, ps, name + "/conv2",
           ops::Silu(Norm(tape, ps, name + "/norm2", h, groups)));
  const Var skip = ps.Has(name + "/skip/w") ? Conv(tape, ps, name + "/skip", x) : x;
  return ops::Add(skip, h);
}

}  // namespace fgdm::nn
