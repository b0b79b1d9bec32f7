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

#ifndef FGDM_GRAPH_SAMPLER_H_
#define FGDM_GRAPH_SAMPLER_H_

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fgdm/denoiser/denoiser.h"
#include "fgdm/denoiser/text.h"
#include "fgdm/diffusion/schedule.h"
#include "fgdm/graph/graph.h"
#include "fgdm/graph/model.h"

namespace fgdm {

enum class InferenceMode {
  kJoint,       // all factors advance together, parents first in each step
  kSequential,  // each chain completes before its children start
};

// One batch element: prompt token ids (empty for the null prompt) and the
// seed keying its noise streams.
struct SampleRequest {
  std::vector<int> prompt;
  uint64_t seed = 0;
};

// Where a variable's values come from. Tensors are batched [N, 3, h, w].
struct VariableSource {
  enum class Kind {
    kSample,      // run the factor
    kNull,        // null condition for every child
    kTrajectory,  // replay latents recorded after each step of an earlier run
    kFixed,       // a clean map fed unchanged at every step
    kRenoised,    // a clean map forward-noised to the reader's next timestep
  };
  Kind kind = Kind::kSample;
  std::vector<Tensor> trajectory;
  Tensor map;

  static VariableSource Null() { return {Kind::kNull, {}, {}}; }
  static VariableSource Trajectory(std::vector<Tensor> steps) {
    return {Kind::kTrajectory, std::move(steps), {}};
  }
  static VariableSource Fixed(Tensor m) { return {Kind::kFixed, {}, std::move(m)}; }
  static VariableSource Renoised(Tensor m) {
    return {Kind::kRenoised, {}, std::move(m)};
  }
};

struct SampleOptions {
  InferenceMode mode = InferenceMode::kJoint;
  // Used by factors without an override. Its guidance scale is therefore
  // also the condition factors' default.
  SamplerConfig sampler;
  std::map<std::string, SamplerConfig> overrides;  // keyed by factor name
  std::map<std::string, VariableSource> sources;   // keyed by variable; default sample
  bool keep_trajectories = false;
  bool trace = false;

  const SamplerConfig& For(const std::string& factor) const;
};

// One factor evaluation, recorded when SampleOptions::trace is set.
struct TraceEvent {
  int master_step = 0;
  int factor = 0;
  int factor_step = 0;
  int t = 0;
  // Per parent: master step that produced the latent read, or -1 for null,
  // fixed and renoised inputs.
  std::vector<int> parent_versions;
};

struct JointSample {
  std::vector<uint64_t> seeds;
  // Final clean latents per variable, [N, 3, h, w]. Null variables are
  // absent.
  std::map<std::string, Tensor> latents;
  // Latent after each step, for sampled variables when requested.
  std::map<std::string, std::vector<Tensor>> trajectories;
  std::map<std::string, double> seconds;  // wall time per factor
  std::vector<TraceEvent> trace;

  // Example b of variable v as [1, 3, h, w].
  Tensor Latent(const std::string& variable, int64_t b) const;
};

// Master-timeline positions of a chain of n steps inside m >= n steps:
// round(k * m / n) for k = 0..n-1.
std::vector<int> AlignSteps(int n, int m);

// Runs the graph. Throws std::invalid_argument for an empty batch, zero
// step counts or a source that does not fit its variable.
JointSample RunGraph(const GraphSpec& spec, const EpsModel& model,
                     std::span<const SampleRequest> requests,
                     const SampleOptions& options);

JointSample SampleJoint(const GraphSpec& spec, const EpsModel& model,
                        std::span<const SampleRequest> requests,
                        SampleOptions options);
JointSample SampleSequential(const GraphSpec& spec, const EpsModel& model,
                             std::span<const SampleRequest> requests,
                             SampleOptions options);
// Inactive variables become null conditions. Throws when `active` names an
// unknown variable or is empty, or when a variable in `outputs` is not
// active.
JointSample SampleSubset(const GraphSpec& spec, const EpsModel& model,
                         const std::set<std::string>& active,
                         std::span<const SampleRequest> requests,
                         SampleOptions options,
                         const std::set<std::string>& outputs = {});

// Plain text-conditioned DDIM sampling with a single denoiser, using the
// same noise streams as factor `stream_name` inside a graph.
Tensor SamplePlain(const Denoiser& denoiser, const TextEncoder& text,
                   const NoiseSchedule& schedule, int64_t height,
                   int64_t width, std::span<const SampleRequest> requests,
                   const SamplerConfig& sampler,
                   const std::string& stream_name);

// Latent <-> data conversions. Latents live in [-1, 1].
Tensor LatentFromUnitImage(const Tensor& hwc);   // [H,W,3] in [0,1] -> [1,3,H,W]
Tensor UnitImageFromLatent(const Tensor& latent);  // [1,3,H,W] -> [H,W,3] clamped
Tensor LatentFromDepth(const Tensor& hw);         // [H,W] in [0,1] -> [1,3,H,W]
Tensor DepthFromLatent(const Tensor& latent);     // channel mean -> [H,W]
Tensor StackBatch(std::span<const Tensor> items);  // [1,...] each -> [N,...]
Tensor SliceBatch(const Tensor& batch, int64_t index);

}  // namespace fgdm

#endif  // FGDM_GRAPH_SAMPLER_H_
