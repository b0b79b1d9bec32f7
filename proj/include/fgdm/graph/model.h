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

#ifndef FGDM_GRAPH_MODEL_H_
#define FGDM_GRAPH_MODEL_H_

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fgdm/denoiser/adapter.h"
#include "fgdm/denoiser/denoiser.h"
#include "fgdm/denoiser/text.h"
#include "fgdm/graph/graph.h"
#include "fgdm/numerics/checkpoint.h"

namespace fgdm {

// Conditioning of one factor evaluation over a batch of N examples.
struct FactorInputs {
  // Token ids per example; an empty list is the null prompt.
  std::vector<std::vector<int>> prompts;
  // One [N, 3, h, w] latent per parent, at the parent's resolution. An
  // undefined tensor nulls that parent for every example.
  std::vector<Tensor> parents;
  // Optional per-parent, per-example presence flags; empty means present
  // wherever the tensor is defined.
  std::vector<std::vector<uint8_t>> present;

  bool IsPresent(size_t parent, int64_t example) const;
};

// Noise prediction for one factor. Implementations must be deterministic
// and safe to call concurrently.
class EpsModel {
 public:
  virtual ~EpsModel() = default;
  virtual Tensor PredictEps(int factor, const Tensor& z_t,
                            std::span<const int> t,
                            const FactorInputs& inputs) const = 0;
};

enum class TrainingStage {
  kTeacher,  // text encoder and backbone train; factor branches frozen
  kFactors,  // backbone and text frozen; adapters and concat nets train
};

// Parameters of a whole FG-DM: the shared text encoder, the shared
// backbone (also the distillation teacher), one adapter branch per
// adapter-mode factor and one network per concat-mode factor.
class FgdmModel : public EpsModel {
 public:
  FgdmModel(GraphSpec spec, uint64_t seed);

  const GraphSpec& spec() const { return spec_; }
  const TextEncoder& text() const { return text_; }
  TextEncoder& text() { return text_; }
  const Denoiser& backbone() const { return backbone_; }
  Denoiser& backbone() { return backbone_; }
  // Null when the factor is not in that mode.
  AdapterBranch* adapter(int factor) { return adapters_.at(factor).get(); }
  const AdapterBranch* adapter(int factor) const { return adapters_.at(factor).get(); }
  Denoiser* network(int factor) { return networks_.at(factor).get(); }
  const Denoiser* network(int factor) const { return networks_.at(factor).get(); }

  // Student forward pass of one factor. Adapter features of examples whose
  // parents are all null are dropped, which leaves the backbone output
  // untouched; the root adapter reads z_t itself.
  DenoiserOutput Forward(Tape* tape, int factor, const Var& z_t,
                         std::span<const int> t, const PromptBatch& prompt,
                         const FactorInputs& inputs) const;
  // Backbone alone on the same inputs.
  DenoiserOutput TeacherForward(Tape* tape, const Var& z_t,
                                std::span<const int> t,
                                const PromptBatch& prompt) const;

  Tensor PredictEps(int factor, const Tensor& z_t, std::span<const int> t,
                    const FactorInputs& inputs) const override;

  void SetStage(TrainingStage stage);
  std::vector<Parameter*> TrainableParams();
  std::vector<const Parameter*> AllParams() const;
  uint64_t BackboneChecksum() const;

  // Names: text/..., teacher/..., factor/<name>/adapter/...,
  // factor/<name>/backbone/... .
  void ExportTo(Checkpoint& ckpt) const;
  void ImportFrom(const Checkpoint& ckpt);

 private:
  GraphSpec spec_;
  TextEncoder text_;
  Denoiser backbone_;
  std::vector<std::unique_ptr<AdapterBranch>> adapters_;
  std::vector<std::unique_ptr<Denoiser>> networks_;
};

// Bilinear resize of parent latents to h x w, channel-concatenated, with
// absent (parent, example) pairs zeroed. Returns [N, 3 * parents, h, w].
Tensor AssembleConditions(const FactorInputs& inputs, int64_t batch,
                          int64_t height, int64_t width);

}  // namespace fgdm

#endif  // FGDM_GRAPH_MODEL_H_
