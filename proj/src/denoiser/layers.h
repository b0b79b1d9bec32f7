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

#ifndef FGDM_DENOISER_LAYERS_H_
#define FGDM_DENOISER_LAYERS_H_

#include <span>
#include <string>

#include "fgdm/numerics/autograd.h"
#include "fgdm/numerics/param_set.h"
#include "fgdm/numerics/rng.h"

// Parameter-set backed building blocks shared by the denoiser and adapters.
namespace fgdm::nn {

// Weights are drawn from N(0, gain^2 / fan_in); zero=true gives all zeros.
void InitConv(ParamSet& ps, const std::string& name, int in, int out, int k,
              RngStream& rng, Real gain = 1.0f, bool zero = false);
// "Same" padding for odd kernels.
Var Conv(Tape* tape, const ParamSet& ps, const std::string& name,
         const Var& x, int stride = 1);

void InitDense(ParamSet& ps, const std::string& name, int in, int out,
               RngStream& rng, Real gain = 1.0f);
Var Dense(Tape* tape, const ParamSet& ps, const std::string& name,
          const Var& x);

void InitNorm(ParamSet& ps, const std::string& name, int channels);
Var Norm(Tape* tape, const ParamSet& ps, const std::string& name,
         const Var& x, int groups);

void InitTimeMlp(ParamSet& ps, const std::string& name, int in_dim,
                 int time_dim, RngStream& rng);
// Returns SiLU(MLP(sinusoid(t))), ready for per-block projections.
Var TimeMlp(Tape* tape, const ParamSet& ps, const std::string& name,
            std::span<const int> t, int in_dim);

void InitResBlock(ParamSet& ps, const std::string& name, int in, int out,
                  int time_dim, RngStream& rng);
Var ResBlock(Tape* tape, const ParamSet& ps, const std::string& name,
             const Var& x, const Var& time, int groups);

}  // namespace fgdm::nn

#endif  // FGDM_DENOISER_LAYERS_H_
