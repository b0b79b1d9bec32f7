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

#include "fgdm/graph/model.h"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "fgdm/numerics/ops.h"
#include "fgdm/numerics/rng.h"

namespace fgdm {

bool FactorInputs::IsPresent(size_t parent, int64_t example) const {
  if (!parents.at(parent).defined()) return false;
  if (present.empty()) return true;
  return present.at(parent).at(example) != 0;
}

Tensor AssembleConditions(const FactorInputs& inputs, int64_t batch,
                          int64_t height, int64_t width) {
  const int64_t k = static_cast<int64_t>(inputs.parents.size());
  Tensor out({batch, kLatentChannels * k, height, width});
  auto o = out.mutable_data();
  const int64_t plane = height * width;
  for (int64_t p = 0; p < k; ++p) {
    const Tensor& src = inputs.parents[p];
    if (!src.defined()) continue;
    if (src.rank() != 4 || src.dim(0) != batch || src.dim(1) != kLatentChannels) {
      throw std::invalid_argument("parent latent must be [N,3,h,w], got " +
                                  ShapeString(src.shape()));
    }
    const Tensor resized = ResizeBilinearNchw(src, height, width);
    auto r = resized.data();
    for (int64_t n = 0; n < batch; ++n) {
      if (!inputs.IsPresent(p, n)) continue;
      for (int64_t c = 0; c < kLatentChannels; ++c) {
        std::copy_n(r.begin() + (n * kLatentChannels + c) * plane, plane,
                    o.begin() + ((n * k + p) * kLatentChannels + c) * plane);
      }
    }
  }
  return out;
}

namespace {

GraphSpec Validated(GraphSpec spec) {
  spec.Validate();
  return spec;
}

}  // namespace

FgdmModel::FgdmModel(GraphSpec spec, uint64_t seed)
    : spec_(Validated(std::move(spec))),
      text_(spec_.vocab_size, spec_.backbone.prompt_dim,
            spec_.backbone.max_tokens, RngStream(seed, "init/text").NextU64()),
      backbone_(spec_.backbone, RngStream(seed, "init/teacher").NextU64()) {
  for (int i = 0; i < spec_.num_factors(); ++i) {
    const FactorSpec& f = spec_.factors[i];
    const uint64_t s = RngStream(seed, "init/factor/" + f.name).NextU64();
    if (f.mode == ConditioningMode::kAdapter) {
      adapters_.push_back(std::make_unique<AdapterBranch>(
          spec_.backbone, spec_.ConditionChannels(i), s));
      networks_.push_back(nullptr);
    } else {
      adapters_.push_back(nullptr);
      networks_.push_back(std::make_unique<Denoiser>(f.denoiser, s));
    }
  }
  SetStage(TrainingStage::kTeacher);
}

DenoiserOutput FgdmModel::Forward(Tape* tape, int factor, const Var& z_t,
                                  std::span<const int> t,
                                  const PromptBatch& prompt,
                                  const FactorInputs& inputs) const {
  const FactorSpec& f = spec_.factors.at(factor);
  if (inputs.parents.size() != f.parents.size()) {
    throw std::invalid_argument("factor \"" + f.name + "\" expects " +
                                std::to_string(f.parents.size()) + " parents");
  }
  const int64_t n = z_t.dim(0);
  const int64_t h = z_t.dim(2);
  const int64_t w = z_t.dim(3);
  if (f.mode == ConditioningMode::kConcat) {
    std::vector<Var> parts = {z_t};
    if (!f.parents.empty()) {
      parts.push_back(Var::Constant(AssembleConditions(inputs, n, h, w)));
    }
    const Var input = parts.size() == 1 ? z_t : ops::Concat(parts, 1);
    return networks_[factor]->Forward(tape, input, t, prompt);
  }
  const AdapterBranch& adapter = *adapters_[factor];
  if (f.parents.empty()) {
    const std::vector<Var> features = adapter.Forward(tape, z_t, t);
    return backbone_.Forward(tape, z_t, t, prompt, &features);
  }
  Tensor mask({n, 1, 1, 1});
  bool any = false;
  for (int64_t e = 0; e < n; ++e) {
    for (size_t p = 0; p < f.parents.size(); ++p) {
      if (inputs.IsPresent(p, e)) {
        mask.mutable_data()[e] = 1;
        any = true;
        break;
      }
    }
  }
  if (!any) return backbone_.Forward(tape, z_t, t, prompt);
  const Var cond = Var::Constant(AssembleConditions(inputs, n, h, w));
  std::vector<Var> features = adapter.Forward(tape, cond, t);
  bool all = true;
  for (Real m : mask.data()) all = all && m != 0;
  if (!all) {
    const Var m = Var::Constant(mask);
    for (Var& v : features) v = ops::Mul(v, m);
  }
  return backbone_.Forward(tape, z_t, t, prompt, &features);
}

DenoiserOutput FgdmModel::TeacherForward(Tape* tape, const Var& z_t,
                                         std::span<const int> t,
                                         const PromptBatch& prompt) const {
  return backbone_.Forward(tape, z_t, t, prompt);
}

Tensor FgdmModel::PredictEps(int factor, const Tensor& z_t,
                             std::span<const int> t,
                             const FactorInputs& inputs) const {
  const PromptBatch prompt = text_.Encode(nullptr, inputs.prompts);
  return Forward(nullptr, factor, Var::Constant(z_t), t, prompt, inputs)
      .eps.value();
}

void FgdmModel::SetStage(TrainingStage stage) {
  const bool teacher = stage == TrainingStage::kTeacher;
  text_.params().SetTrainable(teacher);
  backbone_.params().SetTrainable(teacher);
  for (auto& a : adapters_) {
    if (a) a->params().SetTrainable(!teacher);
  }
  for (auto& n : networks_) {
    if (n) n->params().SetTrainable(!teacher);
  }
}

std::vector<Parameter*> FgdmModel::TrainableParams() {
  std::vector<Parameter*> out;
  auto add = [&out](ParamSet& ps) {
    for (Parameter* p : ps.List(true)) out.push_back(p);
  };
  add(text_.params());
  add(backbone_.params());
  for (int i = 0; i < spec_.num_factors(); ++i) {
    if (adapters_[i]) add(adapters_[i]->params());
    if (networks_[i]) add(networks_[i]->params());
  }
  return out;
}

std::vector<const Parameter*> FgdmModel::AllParams() const {
  std::vector<const Parameter*> out;
  auto add = [&out](const ParamSet& ps) {
    for (const Parameter* p : ps.List()) out.push_back(p);
  };
  add(text_.params());
  add(backbone_.params());
  for (int i = 0; i < spec_.num_factors(); ++i) {
    if (adapters_[i]) add(adapters_[i]->params());
    if (networks_[i]) add(networks_[i]->params());
  }
  return out;
}

uint64_t FgdmModel::BackboneChecksum() const {
  return backbone_.params().Checksum() ^ MixBits(text_.params().Checksum());
}

void FgdmModel::ExportTo(Checkpoint& ckpt) const {
  text_.params().ExportTo(ckpt, "text/");
  backbone_.params().ExportTo(ckpt, "teacher/");
  for (int i = 0; i < spec_.num_factors(); ++i) {
    const std::string prefix = "factor/" + spec_.factors[i].name;
    if (adapters_[i]) adapters_[i]->params().ExportTo(ckpt, prefix + "/adapter/");
    if (networks_[i]) networks_[i]->params().ExportTo(ckpt, prefix + "/backbone/");
  }
}

void FgdmModel::ImportFrom(const Checkpoint& ckpt) {
  text_.params().ImportFrom(ckpt, "text/");
  backbone_.params().ImportFrom(ckpt, "teacher/");
  for (int i = 0; i < spec_.num_factors(); ++i) {
    const std::string prefix = "factor/" + spec_.factors[i].name;
    if (adapters_[i]) adapters_[i]->params().ImportFrom(ckpt, prefix + "/adapter/");
    if (networks_[i]) networks_[i]->params().ImportFrom(ckpt, prefix + "/backbone/");
  }
}

}  // namespace fgdm
