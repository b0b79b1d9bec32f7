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

#include "fgdm/denoiser/config.h"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "fgdm/numerics/json_keys.h"

namespace fgdm {

bool DenoiserConfig::has_attention(int scale) const {
  return std::find(attention_scales.begin(), attention_scales.end(), scale) !=
         attention_scales.end();
}

void DenoiserConfig::Validate() const {
  auto fail = [](const std::string& m) {
    throw std::invalid_argument("denoiser config: " + m);
  };
  if (in_channels < 1 || out_channels < 1) fail("channel counts must be positive");
  if (base_channels < 1) fail("base_channels must be positive");
  if (channel_mult.empty()) fail("channel_mult must not be empty");
  if (depth < 1) fail("depth must be at least 1");
  if (attention_scales.empty()) fail("at least one attention scale is required");
  if (prompt_dim < 1 || max_tokens < 1 || time_dim < 1) fail("dims must be positive");
  if (norm_groups < 1) fail("norm_groups must be positive");
  if (head_channels < 1) fail("head_channels must be positive");
  for (int m : channel_mult) {
    if (m < 1) fail("channel multipliers must be positive");
    if ((base_channels * m) % norm_groups != 0) {
      fail("norm_groups must divide every scale's channel count");
    }
  }
  for (int s : attention_scales) {
    if (s < 0 || s >= num_scales()) fail("attention scale out of range");
    if (channels(s) % head_channels != 0) {
      fail("head_channels must divide the attention width");
    }
  }
}

nlohmann::json DenoiserConfig::ToJson() const {
  return {{"in_channels", in_channels},     {"out_channels", out_channels},
          {"base_channels", base_channels}, {"channel_mult", channel_mult},
          {"depth", depth},                 {"attention_scales", attention_scales},
          {"head_channels", head_channels}, {"prompt_dim", prompt_dim},
          {"max_tokens", max_tokens},       {"norm_groups", norm_groups},
          {"time_dim", time_dim}};
}

DenoiserConfig DenoiserConfig::FromJson(const nlohmann::json& j) {
  RequireKnownKeys(j,
                   {"in_channels", "out_channels", "base_channels",
                    "channel_mult", "depth", "attention_scales",
                    "head_channels", "prompt_dim", "max_tokens",
                    "norm_groups", "time_dim"},
                   "denoiser config");
  DenoiserConfig c;
  c.in_channels = j.value("in_channels", c.in_channels);
  c.out_channels = j.value("out_channels", c.out_channels);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.channel_mult = j.value("channel_mult", c.channel_mult);
  c.depth = j.value("depth", c.depth);
  c.attention_scales = j.value("attention_scales", c.attention_scales);
  c.head_channels = j.value("head_channels", c.head_channels);
  c.prompt_dim = j.value("prompt_dim", c.prompt_dim);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.norm_groups = j.value("norm_groups", c.norm_groups);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.Validate();
  return c;
}

}  // namespace fgdm
