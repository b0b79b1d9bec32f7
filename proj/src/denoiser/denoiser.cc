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

#include "fgdm/denoiser/denoiser.h"

#include <cmath>
#include <stdexcept>
#include <string>

#include "denoiser/layers.h"
#include "fgdm/numerics/ops.h"

namespace fgdm {
namespace {

constexpr Real kMaskedLogit = -1e9f;

std::string ScaleName(const char* part, int scale) {
  return std::string(part) + std::to_string(scale);
}

void InitSelfAttention(ParamSet& ps, const std::string& name, int c,
                       RngStream& rng) {
  nn::InitNorm(ps, name + "/norm", c);
  for (const char* p : {"/q", "/k", "/v", "/o"}) nn::InitDense(ps, name + p, c, c, rng);
}

void InitCrossAttention(ParamSet& ps, const std::string& name, int c,
                        int prompt_dim, RngStream& rng) {
  nn::InitNorm(ps, name + "/norm", c);
  nn::InitDense(ps, name + "/q", c, c, rng);
  nn::InitDense(ps, name + "/k", prompt_dim, c, rng);
  nn::InitDense(ps, name + "/v", prompt_dim, c, rng);
  nn::InitDense(ps, name + "/o", c, c, rng);
}

// [N, S, C] -> [N*heads, S, C/heads].
Var SplitHeads(const Var& x, int heads) {
  const int64_t n = x.dim(0), s = x.dim(1), c = x.dim(2);
  const Var r = ops::Reshape(x, {n, s, heads, c / heads});
  return ops::Reshape(ops::Permute(r, {0, 2, 1, 3}), {n * heads, s, c / heads});
}

// [N*heads, S, d] -> [N, S, heads*d].
Var MergeHeads(const Var& x, int64_t n, int heads) {
  const int64_t s = x.dim(1), d = x.dim(2);
  const Var r = ops::Reshape(x, {n, heads, s, d});
  return ops::Reshape(ops::Permute(r, {0, 2, 1, 3}), {n, s, heads * d});
}

// Shared attention core. keys/values come from context [N, K, *]; bias is
// an optional [N, 1, 1, K] additive mask.
Var Attend(Tape* tape, const ParamSet& ps, const std::string& name,
           const Var& h, const Var& context, const Tensor* bias, int heads,
           int groups, AttentionKind kind, int layer,
           std::vector<AttentionRecord>& records) {
  const int64_t n = h.dim(0), c = h.dim(1), H = h.dim(2), W = h.dim(3);
  const int64_t q_len = H * W;
  const Var x = ops::Permute(
      ops::Reshape(nn::Norm(tape, ps, name + "/norm", h, groups), {n, c, q_len}),
      {0, 2, 1});
  const Var ctx = kind == AttentionKind::kSelf ? x : context;
  const Var q = SplitHeads(nn::Dense(tape, ps, name + "/q", x), heads);
  const Var k = SplitHeads(nn::Dense(tape, ps, name + "/k", ctx), heads);
  const Var v = SplitHeads(nn::Dense(tape, ps, name + "/v", ctx), heads);
  const int64_t k_len = k.dim(1);
  Var logits = ops::Scale(ops::Matmul(q, k, false, true),
                          1.0f / std::sqrt(static_cast<Real>(c / heads)));
  logits = ops::Reshape(logits, {n, heads, q_len, k_len});
  if (bias) logits = ops::Add(logits, Var::Constant(*bias));
  const Var attn = ops::Softmax(logits);
  records.push_back({layer, kind, static_cast<int>(H), static_cast<int>(W),
                     ops::MeanAxis(attn, 1, false)});
  const Var out = MergeHeads(
      ops::Matmul(ops::Reshape(attn, {n * heads, q_len, k_len}), v), n, heads);
  const Var proj = nn::Dense(tape, ps, name + "/o", out);
  return ops::Add(h, ops::Reshape(ops::Permute(proj, {0, 2, 1}), {n, c, H, W}));
}

}  // namespace

Tensor TimestepEmbedding(std::span<const int> t, int dim) {
  const int64_t n = static_cast<int64_t>(t.size());
  Tensor out({n, dim});
  auto o = out.mutable_data();
  const int half = dim / 2;
  for (int64_t b = 0; b < n; ++b) {
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / std::max(1, half));
      o[b * dim + k] = static_cast<Real>(std::sin(t[b] * freq));
      o[b * dim + half + k] = static_cast<Real>(std::cos(t[b] * freq));
    }
  }
  return out;
}

Denoiser::Denoiser(const DenoiserConfig& config, uint64_t seed)
    : config_(config) {
  config_.Validate();
  RngStream rng(seed, "denoiser");
  const DenoiserConfig& c = config_;
  const int S = c.num_scales();
  nn::InitTimeMlp(params_, "time", c.base_channels, c.time_dim, rng);
  nn::InitConv(params_, "conv_in", c.in_channels, c.channels(0), 3, rng);
  int ch = c.channels(0);
  for (int s = 0; s < S; ++s) {
    const std::string e = ScaleName("enc", s);
    for (int d = 0; d < c.depth; ++d) {
      const std::string blk = e + "/res" + std::to_string(d);
      nn::InitResBlock(params_, blk, ch, c.channels(s), c.time_dim, rng);
      ch = c.channels(s);
      if (c.has_attention(s)) {
        InitSelfAttention(params_, e + "/self" + std::to_string(d), ch, rng);
        InitCrossAttention(params_, e + "/cross" + std::to_string(d), ch,
                           c.prompt_dim, rng);
      }
    }
    if (s + 1 < S) nn::InitConv(params_, e + "/down", ch, ch, 3, rng);
  }
  nn::InitResBlock(params_, "mid", ch, ch, c.time_dim, rng);
  for (int s = S - 1; s >= 0; --s) {
    const std::string e = ScaleName("dec", s);
    for (int d = 0; d < c.depth; ++d) {
      const int in = d == 0 ? ch + c.channels(s) : c.channels(s);
      nn::InitResBlock(params_, e + "/res" + std::to_string(d), in,
                       c.channels(s), c.time_dim, rng);
      ch = c.channels(s);
      if (c.has_attention(s)) {
        InitSelfAttention(params_, e + "/self" + std::to_string(d), ch, rng);
        InitCrossAttention(params_, e + "/cross" + std::to_string(d), ch,
                           c.prompt_dim, rng);
      }
    }
    if (s > 0) {
      nn::InitConv(params_, e + "/up", ch, c.channels(s - 1), 3, rng);
      ch = c.channels(s - 1);
    }
  }
  nn::InitNorm(params_, "out/norm", ch);
  nn::InitConv(params_, "out/conv", ch, c.out_channels, 3, rng);
}

std::vector<Shape> Denoiser::FeatureShapes(int64_t batch, int64_t height,
                                           int64_t width) const {
  std::vector<Shape> out;
  for (int s = 0; s < config_.num_scales(); ++s) {
    out.push_back({batch, config_.channels(s), height >> s, width >> s});
  }
  return out;
}

DenoiserOutput Denoiser::Forward(Tape* tape, const Var& z_t,
                                 std::span<const int> t,
                                 const PromptBatch& prompt,
                                 const std::vector<Var>* adapter_features) const {
  const DenoiserConfig& c = config_;
  const int S = c.num_scales();
  if (z_t.rank() != 4 || z_t.dim(1) != c.in_channels) {
    throw std::invalid_argument("denoiser input must be [N," +
                                std::to_string(c.in_channels) + ",H,W], got " +
                                ShapeString(z_t.shape()));
  }
  const int64_t n = z_t.dim(0), H = z_t.dim(2), W = z_t.dim(3);
  const int m = c.resolution_multiple();
  if (H % m != 0 || W % m != 0) {
    throw std::invalid_argument("input size must be a multiple of " + std::to_string(m));
  }
  if (static_cast<int64_t>(t.size()) != n || prompt.batch() != n) {
    throw std::invalid_argument("timestep and prompt batch must match the input");
  }
  if (prompt.tokens.dim(2) != c.prompt_dim) {
    throw std::invalid_argument("prompt embedding width mismatch");
  }
  if (adapter_features) {
    const auto shapes = FeatureShapes(n, H, W);
    if (static_cast<int>(adapter_features->size()) != S) {
      throw std::invalid_argument("expected one adapter feature per scale");
    }
    for (int s = 0; s < S; ++s) {
      if ((*adapter_features)[s].shape() != shapes[s]) {
        throw std::invalid_argument(
            "adapter feature " + std::to_string(s) + " has shape " +
            ShapeString((*adapter_features)[s].shape()) + ", expected " +
            ShapeString(shapes[s]));
      }
    }
  }
  // Padding mask as an additive bias, [N,1,1,L].
  const int64_t L = prompt.mask.dim(1);
  Tensor bias({n, 1, 1, L});
  for (int64_t i = 0; i < n * L; ++i) {
    bias.mutable_data()[i] = prompt.mask[i] > 0.5f ? 0.0f : kMaskedLogit;
  }

  DenoiserOutput result;
  int layer = 0;
  auto attention_pair = [&](const std::string& prefix, int d, Var h) {
    const int heads = static_cast<int>(h.dim(1)) / c.head_channels;
    h = Attend(tape, params_, prefix + "/self" + std::to_string(d), h, Var(),
               nullptr, heads, c.norm_groups, AttentionKind::kSelf, layer++,
               result.records);
    return Attend(tape, params_, prefix + "/cross" + std::to_string(d), h,
                  prompt.tokens, &bias, heads, c.norm_groups,
                  AttentionKind::kCross, layer++, result.records);
  };

  const Var time = nn::TimeMlp(tape, params_, "time", t, c.base_channels);
  Var h = nn::Conv(tape, params_, "conv_in", z_t);
  std::vector<Var> skips;
  for (int s = 0; s < S; ++s) {
    const std::string e = ScaleName("enc", s);
    for (int d = 0; d < c.depth; ++d) {
      h = nn::ResBlock(tape, params_, e + "/res" + std::to_string(d), h, time,
                       c.norm_groups);
      if (c.has_attention(s)) h = attention_pair(e, d, h);
    }
    if (adapter_features) h = ops::Add(h, (*adapter_features)[s]);
    skips.push_back(h);
    if (s + 1 < S) h = nn::Conv(tape, params_, e + "/down", h, 2);
  }
  h = nn::ResBlock(tape, params_, "mid", h, time, c.norm_groups);
  for (int s = S - 1; s >= 0; --s) {
    const std::string e = ScaleName("dec", s);
    const Var parts[] = {h, skips[s]};
    h = ops::Concat(parts, 1);
    for (int d = 0; d < c.depth; ++d) {
      h = nn::ResBlock(tape, params_, e + "/res" + std::to_string(d), h, time,
                       c.norm_groups);
      if (c.has_attention(s)) h = attention_pair(e, d, h);
    }
    if (s > 0) h = nn::Conv(tape, params_, e + "/up", ops::UpsampleNearest2x(h));
  }
  h = ops::Silu(nn::Norm(tape, params_, "out/norm", h, c.norm_groups));
  result.eps = nn::Conv(tape, params_, "out/conv", h);
  return result;
}

}  // namespace fgdm
