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

#ifndef FGDM_SERVICE_RUN_H_
#define FGDM_SERVICE_RUN_H_

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fgdm/graph/model.h"
#include "fgdm/graph/train.h"
#include "fgdm/numerics/checkpoint.h"
#include "fgdm/service/run_config.h"
#include "fgdm/toyworld/toyworld.h"

namespace fgdm {

// Thrown when a command needs a trained checkpoint that does not exist.
class MissingCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exclusive marker file held for the lifetime of the object. A second
// holder of the same path gets IoError.
class RunLock {
 public:
  explicit RunLock(std::filesystem::path path);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Dataset records turned into stacked latents, one tensor per variable.
struct EncodedDataset {
  std::vector<std::vector<int>> prompts;
  std::vector<std::string> texts;
  std::map<std::string, Tensor> latents;  // [n, 3, h, w]
  std::vector<int> train;
  std::vector<int> val;
};

Tensor EncodeVariable(const DatasetRecord& record, const FactorSpec& factor,
                      const Palette& palette);
EncodedDataset EncodeDataset(const Dataset& dataset, const GraphSpec& spec);
TrainBatch GatherBatch(const EncodedDataset& data, const std::vector<int>& indices);

struct TrainProgress {
  TrainingStage stage = TrainingStage::kTeacher;
  int64_t stage_step = 0;
  LossBreakdown loss;
};

struct TrainSummary {
  int64_t teacher_steps = 0;
  int64_t factor_steps = 0;
  int steps_run = 0;
  bool finished = false;
};

// Teacher pretraining, then factor adaptation, resuming from the run's
// checkpoint when present. Runs at most max_steps optimizer steps in this
// call (negative: no limit) and writes the checkpoint every
// checkpoint_every steps and at the end. Holds the run lock throughout.
TrainSummary TrainRun(const RunConfig& config, const Dataset& dataset, int max_steps,
                      const std::function<void(const TrainProgress&)>& on_step = {});

// Loads the run's checkpoint into a fresh model. MissingCheckpoint when
// absent.
std::unique_ptr<FgdmModel> LoadTrainedModel(const RunConfig& config);

}  // namespace fgdm

#endif  // FGDM_SERVICE_RUN_H_
