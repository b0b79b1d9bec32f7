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

#include "fgdm/graph/sampler.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "fgdm/numerics/rng.h"

namespace fgdm {
namespace {

using Clock = std::chrono::steady_clock;
using Kind = VariableSource::Kind;

[[noreturn]] void Fail(const std::string& message) {
  throw std::invalid_argument("sampler: " + message);
}

Tensor Repeat(const Tensor& x, int times) {
  std::vector<Tensor> parts(times, x);
  return Concat(parts, 0);
}

Tensor SliceRange(const Tensor& batch, int64_t begin, int64_t count) {
  Shape shape = batch.shape();
  const int64_t inner = batch.numel() / shape[0];
  shape[0] = count;
  auto d = batch.data();
  return Tensor(shape, std::vector<Real>(d.begin() + begin * inner,
                                         d.begin() + (begin + count) * inner));
}

Tensor StreamNoise(std::span<const SampleRequest> requests,
                   const std::string& purpose, uint64_t index,
                   const Shape& item) {
  std::vector<Tensor> parts;
  for (const SampleRequest& r : requests) {
    parts.push_back(RngStream(r.seed, purpose, index).NormalTensor(item));
  }
  return Concat(parts, 0);
}

// Classifier-free guidance: conditional and unconditional halves are
// evaluated as one batch of 2N. The unconditional half drops the prompt and
// every visual parent.
Tensor GuidedEps(const EpsModel& model, int factor, const Tensor& z, int t,
                 const FactorInputs& inputs, double scale) {
  const int64_t n = z.dim(0);
  if (scale == 1.0) {
    const std::vector<int> ts(n, t);
    return model.PredictEps(factor, z, ts, inputs);
  }
  FactorInputs both;
  both.prompts = inputs.prompts;
  both.prompts.resize(2 * n);
  for (size_t p = 0; p < inputs.parents.size(); ++p) {
    const Tensor& par = inputs.parents[p];
    both.parents.push_back(par.defined() ? Repeat(par, 2) : Tensor());
    std::vector<uint8_t> flags(2 * n, 0);
    for (int64_t e = 0; e < n; ++e) flags[e] = inputs.IsPresent(p, e) ? 1 : 0;
    both.present.push_back(std::move(flags));
  }
  const std::vector<int> ts(2 * n, t);
  const Tensor eps = model.PredictEps(factor, Repeat(z, 2), ts, both);
  return CfgCombine(SliceRange(eps, 0, n), SliceRange(eps, n, n), scale);
}

struct FactorRun {
  const FactorSpec* spec = nullptr;
  VariableSource source;
  const SamplerConfig* config = nullptr;
  std::vector<int> timesteps;
  Tensor z;
  int done = 0;  // steps taken
  std::vector<int> positions;
  std::vector<Tensor> history;
  Tensor renoise_eps;
  double seconds = 0.0;

  int steps() const {
    if (source.kind == Kind::kTrajectory) return static_cast<int>(source.trajectory.size());
    return config->steps;
  }
};

bool Replays(const FactorRun& r) {
  return r.source.kind == Kind::kSample || r.source.kind == Kind::kTrajectory;
}

// Latest entry index k with positions[k] <= j.
int Latest(const std::vector<int>& positions, int j) {
  int k = -1;
  for (size_t i = 0; i < positions.size() && positions[i] <= j; ++i) k = static_cast<int>(i);
  return k;
}

class Engine {
 public:
  Engine(const GraphSpec& spec, const EpsModel& model,
         std::span<const SampleRequest> requests, const SampleOptions& options)
      : spec_(spec), model_(model), requests_(requests), options_(options),
        schedule_(spec.schedule) {
    if (requests.empty()) Fail("empty batch");
    spec.Validate();
    for (const auto& [var, src] : options.sources) {
      if (spec.IndexOf(var) < 0) Fail("source for unknown variable \"" + var + "\"");
    }
    for (const auto& [name, cfg] : options.overrides) {
      bool found = false;
      for (const FactorSpec& f : spec.factors) found = found || f.name == name;
      if (!found) Fail("sampler override for unknown factor \"" + name + "\"");
    }
    const int64_t n = static_cast<int64_t>(requests.size());
    for (const FactorSpec& f : spec.factors) {
      FactorRun run;
      run.spec = &f;
      auto it = options.sources.find(f.output);
      if (it != options.sources.end()) run.source = it->second;
      run.config = &options.For(f.name);
      run.config->Validate(schedule_.T());
      const Shape shape = {n, kLatentChannels, f.height, f.width};
      switch (run.source.kind) {
        case Kind::kSample:
          run.z = StreamNoise(requests, "init/" + f.name, 0,
                              {1, kLatentChannels, f.height, f.width});
          break;
        case Kind::kTrajectory:
          if (run.source.trajectory.empty()) Fail("empty trajectory for " + f.output);
          for (const Tensor& s : run.source.trajectory) {
            if (s.shape() != shape) Fail("trajectory shape mismatch for " + f.output);
          }
          break;
        case Kind::kFixed:
        case Kind::kRenoised:
          if (run.source.map.shape() != shape) {
            Fail("map for " + f.output + " must be " + ShapeString(shape) +
                 ", got " + ShapeString(run.source.map.shape()));
          }
          if (run.source.kind == Kind::kRenoised) {
            run.renoise_eps = StreamNoise(requests, "renoise/" + f.output, 0,
                                          {1, kLatentChannels, f.height, f.width});
          }
          break;
        case Kind::kNull:
          break;
      }
      if (run.source.kind == Kind::kSample) {
        run.timesteps = DdimTimesteps(schedule_.T(), run.config->steps);
      }
      runs_.push_back(std::move(run));
    }
    bool any = false;
    for (const FactorRun& r : runs_) any = any || r.source.kind == Kind::kSample;
    if (!any) Fail("no factor to sample");
  }

  JointSample Run() {
    if (options_.mode == InferenceMode::kJoint) {
      int m = 0;
      for (const FactorRun& r : runs_) {
        if (Replays(r)) m = std::max(m, r.steps());
      }
      for (FactorRun& r : runs_) {
        if (Replays(r)) r.positions = AlignSteps(r.steps(), m);
      }
      for (int j = 0; j < m; ++j) {
        for (int i = 0; i < spec_.num_factors(); ++i) {
          FactorRun& r = runs_[i];
          if (r.source.kind == Kind::kSample && r.done < r.steps() &&
              r.positions[r.done] == j) {
            Step(i, j, /*sequential=*/false);
          }
        }
      }
    } else {
      for (int i = 0; i < spec_.num_factors(); ++i) {
        FactorRun& r = runs_[i];
        if (r.source.kind != Kind::kSample) continue;
        r.positions = AlignSteps(r.steps(), r.steps());
        for (int j = 0; j < r.steps(); ++j) Step(i, j, /*sequential=*/true);
      }
    }
    return Collect();
  }

 private:
  // t_prev is the reading factor's next timestep; renoised maps are brought
  // to that level.
  Tensor Read(int parent, int j, int t_prev, bool sequential, int* version) {
    FactorRun& p = runs_[parent];
    *version = -1;
    switch (p.source.kind) {
      case Kind::kNull:
        return Tensor();
      case Kind::kFixed:
        return p.source.map;
      case Kind::kSample: {
        if (sequential) return p.z;
        if (p.done == 0) Fail("parent read before its first step");
        *version = p.positions[p.done - 1];
        return p.z;
      }
      case Kind::kTrajectory: {
        if (sequential) return p.source.trajectory.back();
        const int k = Latest(p.positions, j);
        if (k < 0) Fail("trajectory read before its first step");
        *version = p.positions[k];
        return p.source.trajectory[k];
      }
      case Kind::kRenoised:
        return ForwardNoise(p.source.map, t_prev, p.renoise_eps, schedule_);
    }
    return Tensor();
  }

  void Step(int i, int j, bool sequential) {
    const auto start = Clock::now();
    FactorRun& r = runs_[i];
    const int k = r.done;
    const int t = r.timesteps[k];
    const int t_prev = k + 1 < r.steps() ? r.timesteps[k + 1] : 0;
    FactorInputs inputs;
    for (const SampleRequest& req : requests_) inputs.prompts.push_back(req.prompt);
    TraceEvent event{j, i, k, t, {}};
    for (int p : spec_.ParentIndices(i)) {
      int version = -1;
      inputs.parents.push_back(Read(p, j, t_prev, sequential, &version));
      event.parent_versions.push_back(version);
    }
    const SamplerConfig& cfg = *r.config;
    const Tensor eps = GuidedEps(model_, i, r.z, t, inputs, cfg.guidance_scale);
    Tensor xi;
    if (DdimSigma(t, t_prev, cfg.eta, schedule_) > 0.0) {
      xi = StreamNoise(requests_, "step/" + r.spec->name, k,
                       {1, kLatentChannels, r.spec->height, r.spec->width});
    }
    r.z = DdimStep(r.z, eps, t, t_prev, cfg.eta, xi, schedule_, cfg.clip_x0);
    ++r.done;
    if (options_.keep_trajectories) r.history.push_back(r.z);
    if (options_.trace) trace_.push_back(std::move(event));
    r.seconds += std::chrono::duration<double>(Clock::now() - start).count();
  }

  JointSample Collect() {
    JointSample out;
    for (const SampleRequest& req : requests_) out.seeds.push_back(req.seed);
    for (FactorRun& r : runs_) {
      const std::string& v = r.spec->output;
      switch (r.source.kind) {
        case Kind::kSample:
          out.latents[v] = r.z;
          out.seconds[r.spec->name] = r.seconds;
          if (options_.keep_trajectories) out.trajectories[v] = std::move(r.history);
          break;
        case Kind::kTrajectory:
          out.latents[v] = r.source.trajectory.back();
          break;
        case Kind::kFixed:
        case Kind::kRenoised:
          out.latents[v] = r.source.map;
          break;
        case Kind::kNull:
          break;
      }
    }
    out.trace = std::move(trace_);
    return out;
  }

  const GraphSpec& spec_;
  const EpsModel& model_;
  std::span<const SampleRequest> requests_;
  const SampleOptions& options_;
  NoiseSchedule schedule_;
  std::vector<FactorRun> runs_;
  std::vector<TraceEvent> trace_;
};

}  // namespace

const SamplerConfig& SampleOptions::For(const std::string& factor) const {
  auto it = overrides.find(factor);
  return it == overrides.end() ? sampler : it->second;
}

Tensor JointSample::Latent(const std::string& variable, int64_t b) const {
  auto it = latents.find(variable);
  if (it == latents.end()) {
    throw std::out_of_range("no latent for variable \"" + variable + "\"");
  }
  return SliceBatch(it->second, b);
}

std::vector<int> AlignSteps(int n, int m) {
  if (n < 1 || m < n) {
    throw std::invalid_argument("cannot align " + std::to_string(n) +
                                " steps onto " + std::to_string(m));
  }
  std::vector<int> out(n);
  for (int k = 0; k < n; ++k) {
    out[k] = static_cast<int>(std::lround(static_cast<double>(k) * m / n));
  }
  return out;
}

JointSample RunGraph(const GraphSpec& spec, const EpsModel& model,
                     std::span<const SampleRequest> requests,
                     const SampleOptions& options) {
  Engine engine(spec, model, requests, options);
  return engine.Run();
}

JointSample SampleJoint(const GraphSpec& spec, const EpsModel& model,
                        std::span<const SampleRequest> requests,
                        SampleOptions options) {
  options.mode = InferenceMode::kJoint;
  return RunGraph(spec, model, requests, options);
}

JointSample SampleSequential(const GraphSpec& spec, const EpsModel& model,
                             std::span<const SampleRequest> requests,
                             SampleOptions options) {
  options.mode = InferenceMode::kSequential;
  return RunGraph(spec, model, requests, options);
}

JointSample SampleSubset(const GraphSpec& spec, const EpsModel& model,
                         const std::set<std::string>& active,
                         std::span<const SampleRequest> requests,
                         SampleOptions options,
                         const std::set<std::string>& outputs) {
  if (active.empty()) Fail("empty active set");
  for (const std::string& v : active) {
    if (spec.IndexOf(v) < 0) Fail("unknown variable \"" + v + "\"");
  }
  for (const std::string& v : outputs) {
    if (!active.count(v)) Fail("variable \"" + v + "\" is requested but not active");
  }
  for (const FactorSpec& f : spec.factors) {
    if (!active.count(f.output)) options.sources[f.output] = VariableSource::Null();
  }
  JointSample out = RunGraph(spec, model, requests, options);
  for (auto it = out.latents.begin(); it != out.latents.end();) {
    it = active.count(it->first) ? std::next(it) : out.latents.erase(it);
  }
  return out;
}

Tensor SamplePlain(const Denoiser& denoiser, const TextEncoder& text,
                   const NoiseSchedule& schedule, int64_t height,
                   int64_t width, std::span<const SampleRequest> requests,
                   const SamplerConfig& sampler,
                   const std::string& stream_name) {
  sampler.Validate(schedule.T());
  const int64_t n = static_cast<int64_t>(requests.size());
  std::vector<std::vector<int>> prompts;
  for (const SampleRequest& r : requests) prompts.push_back(r.prompt);
  const PromptBatch cond = text.Encode(nullptr, prompts);
  const PromptBatch uncond =
      text.Encode(nullptr, std::vector<std::vector<int>>(n));
  const Shape item = {1, kLatentChannels, height, width};
  Tensor z = StreamNoise(requests, "init/" + stream_name, 0, item);
  const std::vector<int> ts = DdimTimesteps(schedule.T(), sampler.steps);
  for (size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    const std::vector<int> tv(n, t);
    Tensor eps = denoiser.Forward(nullptr, Var::Constant(z), tv, cond).eps.value();
    if (sampler.guidance_scale != 1.0) {
      const Tensor e0 = denoiser.Forward(nullptr, Var::Constant(z), tv, uncond).eps.value();
      eps = CfgCombine(eps, e0, sampler.guidance_scale);
    }
    Tensor xi;
    if (DdimSigma(t, t_prev, sampler.eta, schedule) > 0.0) {
      xi = StreamNoise(requests, "step/" + stream_name, k, item);
    }
    z = DdimStep(z, eps, t, t_prev, sampler.eta, xi, schedule, sampler.clip_x0);
  }
  return z;
}

Tensor LatentFromUnitImage(const Tensor& hwc) {
  if (hwc.rank() != 3 || hwc.dim(2) != 3) Fail("expected [H,W,3]");
  const int64_t h = hwc.dim(0);
  const int64_t w = hwc.dim(1);
  Tensor out({1, 3, h, w});
  auto o = out.mutable_data();
  auto x = hwc.data();
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t i = 0; i < h * w; ++i) o[c * h * w + i] = x[i * 3 + c] * 2 - 1;
  }
  return out;
}

Tensor UnitImageFromLatent(const Tensor& latent) {
  if (latent.rank() != 4 || latent.dim(0) != 1 || latent.dim(1) != 3) {
    Fail("expected [1,3,H,W]");
  }
  const int64_t h = latent.dim(2);
  const int64_t w = latent.dim(3);
  Tensor out({h, w, 3});
  auto o = out.mutable_data();
  auto x = latent.data();
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t i = 0; i < h * w; ++i) {
      o[i * 3 + c] = std::clamp<Real>((x[c * h * w + i] + 1) / 2, 0, 1);
    }
  }
  return out;
}

Tensor LatentFromDepth(const Tensor& hw) {
  if (hw.rank() != 2) Fail("expected [H,W]");
  const int64_t plane = hw.numel();
  Tensor out({1, 3, hw.dim(0), hw.dim(1)});
  auto o = out.mutable_data();
  auto x = hw.data();
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t i = 0; i < plane; ++i) o[c * plane + i] = x[i] * 2 - 1;
  }
  return out;
}

Tensor DepthFromLatent(const Tensor& latent) {
  if (latent.rank() != 4 || latent.dim(0) != 1 || latent.dim(1) != 3) {
    Fail("expected [1,3,H,W]");
  }
  const int64_t plane = latent.dim(2) * latent.dim(3);
  Tensor out({latent.dim(2), latent.dim(3)});
  auto o = out.mutable_data();
  auto x = latent.data();
  for (int64_t i = 0; i < plane; ++i) {
    const double m = (static_cast<double>(x[i]) + x[plane + i] + x[2 * plane + i]) / 3;
    o[i] = static_cast<Real>(std::clamp((m + 1) / 2, 0.0, 1.0));
  }
  return out;
}

Tensor StackBatch(std::span<const Tensor> items) { return Concat(items, 0); }

Tensor SliceBatch(const Tensor& batch, int64_t index) {
  if (index < 0 || index >= batch.dim(0)) throw std::out_of_range("batch index");
  return SliceRange(batch, index, 1);
}

}  // namespace fgdm
