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

#include "fgdm/denoiser/adapter.h"

#include <stdexcept>
#include <string>

#include "denoiser/layers.h"
#include "fgdm/numerics/ops.h"

namespace fgdm {

AdapterBranch::AdapterBranch(const DenoiserConfig& host, int in_channels,
                             uint64_t seed)
    : host_(host), in_channels_(in_channels) {
  host_.Validate();
  if (in_channels < 1) throw std::invalid_argument("adapter needs input channels");
  RngStream rng(seed, "adapter");
  nn::InitTimeMlp(params_, "time", host_.base_channels, host_.time_dim, rng);
  int ch = in_channels;
  for (int s = 0; s < host_.num_scales(); ++s) {
    const std::string b = "scale" + std::to_string(s);
    const int out = host_.channels(s);
    nn::InitConv(params_, b + "/conv", ch, out, 3, rng);
    nn::InitResBlock(params_, b + "/res0", out, out, host_.time_dim, rng);
    nn::InitResBlock(params_, b + "/res1", out, out, host_.time_dim, rng);
    nn::InitConv(params_, b + "/proj", out, out, 1, rng, 1.0f, /*zero=*/true);
    ch = out;
  }
}

std::vector<Var> AdapterBranch::Forward(Tape* tape, const Var& cond,
                                        std::span<const int> t) const {
  if (cond.rank() != 4 || cond.dim(1) != in_channels_) {
    throw std::invalid_argument("adapter input must be [N," +
                                std::to_string(in_channels_) + ",H,W], got " +
                                ShapeString(cond.shape()));
  }
  const int m = host_.resolution_multiple();
  if (cond.dim(2) % m != 0 || cond.dim(3) % m != 0) {
    throw std::invalid_argument("adapter input size must be a multiple of " +
                                std::to_string(m));
  }
  if (static_cast<int64_t>(t.size()) != cond.dim(0)) {
    throw std::invalid_argument("timestep batch must match the adapter input");
  }
  const Var time = nn::TimeMlp(tape, params_, "time", t, host_.base_channels);
  std::vector<Var> features;
  Var h = cond;
  for (int s = 0; s < host_.num_scales(); ++s) {
    const std::string b = "scale" + std::to_string(s);
    h = nn::Conv(tape, params_, b + "/conv", h, s == 0 ? 1 : 2);
    h = nn::ResBlock(tape, params_, b + "/res0", h, time, host_.norm_groups);
    h = nn::ResBlock(tape, params_, b + "/res1", h, time, host_.norm_groups);
    features.push_back(nn::Conv(tape, params_, b + "/proj", h));
  }
  return features;
}

}  // namespace fgdm
