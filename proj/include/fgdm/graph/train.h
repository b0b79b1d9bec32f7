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

#ifndef FGDM_GRAPH_TRAIN_H_
#define FGDM_GRAPH_TRAIN_H_

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgdm/diffusion/schedule.h"
#include "fgdm/graph/distill.h"
#include "fgdm/graph/model.h"
#include "fgdm/numerics/adamw.h"
#include "fgdm/numerics/checkpoint.h"
#include "fgdm/numerics/rng.h"

namespace fgdm {

struct TrainConfig {
  double dropout_prob = 0.2;
  double lambda_kl = 0.1;
  int batch_size = 16;
  int steps = 1000;
  AdamWConfig optimizer;
  DistillConfig distill;
  // Factors whose losses are trained in the factor stage; empty for all.
  std::vector<std::string> factors;
  uint64_t seed = 0;

  void Validate() const;
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);
};

// Every variable of the graph, batched: latents [N, 3, h, w] in [-1, 1].
struct TrainBatch {
  std::vector<std::vector<int>> prompts;
  std::map<std::string, Tensor> latents;

  int64_t size() const { return static_cast<int64_t>(prompts.size()); }
};

// Condition dropout for one batch over M conditioning variables (the
// prompt is variable 0, visual conditions follow in graph order). With
// probability p an example drops a uniform subset whose size is uniform in
// 1..M-1 (the prompt alone when M = 1).
struct DropoutPlan {
  std::vector<std::vector<uint8_t>> dropped;  // [example][variable]

  bool Any(int64_t example) const;
  int64_t CountDropped() const;
};

DropoutPlan PlanDropout(RngStream& rng, int64_t batch, int num_variables,
                        double probability);

struct LossBreakdown {
  int64_t step = 0;
  std::map<std::string, double> factor_mse;
  double kl = 0.0;
  double total = 0.0;
  DropoutPlan dropout;
};

// Owns the optimizer for one training stage. Randomness is keyed by
// (seed, purpose, step) so a resumed run draws the same values.
class Trainer {
 public:
  Trainer(FgdmModel& model, TrainConfig config, TrainingStage stage);

  // Teacher stage: denoising loss of the backbone on "image" with prompt
  // dropout. Factor stage: sum of per-factor losses plus lambda_kl times
  // the distillation loss of the first condition factor. Applies one AdamW
  // update to trainable parameters.
  LossBreakdown Step(const TrainBatch& batch);

  int64_t step() const { return optimizer_->step_count(); }
  TrainingStage stage() const { return stage_; }
  const TrainConfig& config() const { return config_; }

  // Dropout draws of a given step, as Step would make them.
  DropoutPlan PlannedDropout(int64_t step, int64_t batch) const;

  // Moments and step count under "optim/<stage>/...".
  void ExportTo(Checkpoint& ckpt) const;
  void ImportFrom(const Checkpoint& ckpt);

 private:
  LossBreakdown TeacherStep(const TrainBatch& batch, Tape& tape, Var& total);
  LossBreakdown FactorStep(const TrainBatch& batch, Tape& tape, Var& total);

  FgdmModel& model_;
  TrainConfig config_;
  TrainingStage stage_;
  NoiseSchedule schedule_;
  std::unique_ptr<AdamW> optimizer_;
};

std::string StageName(TrainingStage stage);

}  // namespace fgdm

#endif  // FGDM_GRAPH_TRAIN_H_
