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

#ifndef FGDM_DENOISER_ADAPTER_H_
#define FGDM_DENOISER_ADAPTER_H_

#include <span>
#include <vector>

#include "fgdm/denoiser/config.h"
#include "fgdm/numerics/autograd.h"
#include "fgdm/numerics/param_set.h"

namespace fgdm {

// Condition feature extractor that mirrors the host encoder pyramid: per
// scale one convolution (stride 2 after the first scale), two
// timestep-residual blocks and a zero-initialized 1x1 projection.
class AdapterBranch {
 public:
  AdapterBranch(const DenoiserConfig& host, int in_channels, uint64_t seed);

  // cond: [N, in_channels, H, W] at the host input resolution.
  std::vector<Var> Forward(Tape* tape, const Var& cond,
                           std::span<const int> t) const;

  int in_channels() const { return in_channels_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  DenoiserConfig host_;
  int in_channels_;
  ParamSet params_;
};

}  // namespace fgdm

#endif  // FGDM_DENOISER_ADAPTER_H_
