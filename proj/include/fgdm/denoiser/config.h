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

#ifndef FGDM_DENOISER_CONFIG_H_
#define FGDM_DENOISER_CONFIG_H_

#include <vector>

#include <nlohmann/json.hpp>

namespace fgdm {

struct DenoiserConfig {
  int in_channels = 3;
  int out_channels = 3;
  int base_channels = 32;
  // One entry per encoder scale; scale i runs at resolution / 2^i.
  std::vector<int> channel_mult = {1, 2, 2, 2};
  int depth = 1;  // residual blocks per scale
  std::vector<int> attention_scales = {1, 2, 3};
  int head_channels = 32;
  int prompt_dim = 32;
  int max_tokens = 8;
  int norm_groups = 8;
  int time_dim = 64;

  int num_scales() const { return static_cast<int>(channel_mult.size()); }
  int channels(int scale) const { return base_channels * channel_mult.at(scale); }
  bool has_attention(int scale) const;
  // Smallest input side length the pyramid accepts evenly.
  int resolution_multiple() const { return 1 << (num_scales() - 1); }

  void Validate() const;
  nlohmann::json ToJson() const;
  static DenoiserConfig FromJson(const nlohmann::json& j);
};

}  // namespace fgdm

#endif  // FGDM_DENOISER_CONFIG_H_
