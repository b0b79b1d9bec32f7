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

#ifndef FGDM_DENOISER_DENOISER_H_
#define FGDM_DENOISER_DENOISER_H_

#include <span>
#include <vector>

#include "fgdm/denoiser/config.h"
#include "fgdm/denoiser/text.h"
#include "fgdm/numerics/autograd.h"
#include "fgdm/numerics/param_set.h"

namespace fgdm {

enum class AttentionKind { kSelf = 0, kCross = 1 };

// Head-averaged softmax weights of one attention layer: [N, Q, K] with
// Q = height * width query positions.
struct AttentionRecord {
  int layer = 0;
  AttentionKind kind = AttentionKind::kSelf;
  int height = 0;
  int width = 0;
  Var map;
};

struct DenoiserOutput {
  Var eps;
  std::vector<AttentionRecord> records;
};

// Convolutional U-Net noise predictor with self- and cross-attention.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& config, uint64_t seed);

  // z_t: [N, in_channels, H, W]; t: N timesteps. adapter_features, when
  // given, holds one tensor per encoder scale shaped like that scale's
  // output and is added to it.
  DenoiserOutput Forward(Tape* tape, const Var& z_t, std::span<const int> t,
                         const PromptBatch& prompt,
                         const std::vector<Var>* adapter_features = nullptr) const;

  // Shapes of the per-scale encoder features for an input of H x W.
  std::vector<Shape> FeatureShapes(int64_t batch, int64_t height,
                                   int64_t width) const;

  const DenoiserConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  DenoiserConfig config_;
  ParamSet params_;
};

// Sinusoidal embedding of integer timesteps: [N, dim].
Tensor TimestepEmbedding(std::span<const int> t, int dim);

}  // namespace fgdm

#endif  // FGDM_DENOISER_DENOISER_H_
