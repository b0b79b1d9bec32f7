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

#include "fgdm/service/run.h"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "fgdm/graph/sampler.h"
#include "fgdm/numerics/rng.h"

namespace fgdm {

RunLock::RunLock(std::filesystem::path path) : path_(std::move(path)) {
  std::filesystem::create_directories(path_.parent_path());
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw IoError(errno == EEXIST
                      ? "run directory is locked by another process (" + path_.string() + ")"
                      : "cannot create lock " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] ssize_t n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

Tensor EncodeVariable(const DatasetRecord& record, const FactorSpec& factor,
                      const Palette& palette) {
  switch (factor.kind) {
    case VariableKind::kSegmentation:
      return LatentFromUnitImage(EncodeMap(record.segmentation, palette));
    case VariableKind::kDepth:
      return LatentFromDepth(record.depth);
    case VariableKind::kImage:
      return LatentFromUnitImage(record.image);
  }
  throw std::logic_error("unhandled variable kind");
}

EncodedDataset EncodeDataset(const Dataset& dataset, const GraphSpec& spec) {
  const Palette palette = dataset.palette();
  const Vocabulary vocab = dataset.vocabulary();
  EncodedDataset out;
  out.train = dataset.train;
  out.val = dataset.val;
  for (const DatasetRecord& r : dataset.records) {
    out.prompts.push_back(vocab.Encode(r.prompt));
    out.texts.push_back(r.prompt);
  }
  for (const FactorSpec& f : spec.factors) {
    std::vector<Tensor> items;
    for (const DatasetRecord& r : dataset.records) {
      Tensor t = EncodeVariable(r, f, palette);
      if (t.dim(2) != f.height || t.dim(3) != f.width) {
        throw std::invalid_argument("dataset maps for \"" + f.output + "\" are " +
                                    ShapeString(t.shape()) + ", factor expects " +
                                    std::to_string(f.height) + "x" + std::to_string(f.width));
      }
      items.push_back(std::move(t));
    }
    out.latents[f.output] = StackBatch(items);
  }
  return out;
}

TrainBatch GatherBatch(const EncodedDataset& data, const std::vector<int>& indices) {
  TrainBatch batch;
  for (int i : indices) batch.prompts.push_back(data.prompts.at(i));
  for (const auto& [v, all] : data.latents) {
    const int64_t inner = all.numel() / all.dim(0);
    Shape shape = all.shape();
    shape[0] = static_cast<int64_t>(indices.size());
    Tensor t(shape);
    auto out = t.mutable_data();
    auto src = all.data();
    for (size_t k = 0; k < indices.size(); ++k) {
      std::copy_n(src.begin() + indices[k] * inner, inner, out.begin() + k * inner);
    }
    batch.latents[v] = std::move(t);
  }
  return batch;
}

namespace {

std::vector<int> DrawBatch(const std::vector<int>& pool, int size, uint64_t seed,
                           TrainingStage stage, int64_t step) {
  RngStream rng(seed, "train/batch/" + StageName(stage), static_cast<uint64_t>(step));
  std::vector<int> out;
  for (int i = 0; i < size; ++i) {
    out.push_back(pool[rng.UniformInt(0, static_cast<int64_t>(pool.size()) - 1)]);
  }
  return out;
}

void SaveRun(const RunConfig& config, const FgdmModel& model, const Checkpoint& teacher_state,
             const Trainer* factors) {
  Checkpoint ckpt = teacher_state;
  model.ExportTo(ckpt);
  if (factors) factors->ExportTo(ckpt);
  ckpt.meta["graph"] = config.graph.ToJson();
  ckpt.Save(config.checkpoint_path());
}

void CheckGraph(const Checkpoint& ckpt, const RunConfig& config) {
  if (ckpt.meta.contains("graph") && ckpt.meta.at("graph") != config.graph.ToJson()) {
    throw std::invalid_argument("checkpoint " + config.checkpoint_path().string() +
                                " was written for a different graph");
  }
}

}  // namespace

TrainSummary TrainRun(const RunConfig& config, const Dataset& dataset, int max_steps,
                      const std::function<void(const TrainProgress&)>& on_step) {
  config.Validate();
  const std::filesystem::path dir(config.output_dir);
  RunLock lock(dir / "train.lock");
  const EncodedDataset data = EncodeDataset(dataset, config.graph);
  if (data.train.empty()) throw std::invalid_argument("dataset has no training split");

  FgdmModel model(config.graph, config.seed);
  Checkpoint resume;
  if (std::filesystem::exists(config.checkpoint_path())) {
    resume = Checkpoint::Load(config.checkpoint_path());
    CheckGraph(resume, config);
    model.ImportFrom(resume);
  }

  TrainSummary summary;
  int since_save = 0;
  auto budget_left = [&] { return max_steps < 0 || summary.steps_run < max_steps; };

  // Teacher optimizer state is carried along so a resumed run that is
  // still in the teacher stage continues exactly.
  Checkpoint teacher_state;
  {
    Trainer teacher(model, config.train.teacher, TrainingStage::kTeacher);
    teacher.ImportFrom(resume);
    while (teacher.step() < config.train.teacher.steps && budget_left()) {
      const auto idx = DrawBatch(data.train, config.train.teacher.batch_size,
                                 config.train.teacher.seed, TrainingStage::kTeacher,
                                 teacher.step());
      TrainProgress p{TrainingStage::kTeacher, teacher.step(), teacher.Step(GatherBatch(data, idx))};
      ++summary.steps_run;
      if (on_step) on_step(p);
      if (++since_save >= config.train.checkpoint_every) {
        Checkpoint t;
        teacher.ExportTo(t);
        SaveRun(config, model, t, nullptr);
        since_save = 0;
      }
    }
    teacher.ExportTo(teacher_state);
    summary.teacher_steps = teacher.step();
    if (teacher.step() < config.train.teacher.steps) {
      SaveRun(config, model, teacher_state, nullptr);
      return summary;
    }
  }

  Trainer factors(model, config.train.factors, TrainingStage::kFactors);
  factors.ImportFrom(resume);
  while (factors.step() < config.train.factors.steps && budget_left()) {
    const auto idx = DrawBatch(data.train, config.train.factors.batch_size,
                               config.train.factors.seed, TrainingStage::kFactors,
                               factors.step());
    TrainProgress p{TrainingStage::kFactors, factors.step(), factors.Step(GatherBatch(data, idx))};
    ++summary.steps_run;
    if (on_step) on_step(p);
    if (++since_save >= config.train.checkpoint_every) {
      SaveRun(config, model, teacher_state, &factors);
      since_save = 0;
    }
  }
  summary.factor_steps = factors.step();
  summary.finished = factors.step() >= config.train.factors.steps;
  SaveRun(config, model, teacher_state, &factors);
  return summary;
}

std::unique_ptr<FgdmModel> LoadTrainedModel(const RunConfig& config) {
  if (!std::filesystem::exists(config.checkpoint_path())) {
    throw MissingCheckpoint("no checkpoint at " + config.checkpoint_path().string() +
                            "; run `fgdm train` first");
  }
  auto model = std::make_unique<FgdmModel>(config.graph, config.seed);
  const Checkpoint ckpt = Checkpoint::Load(config.checkpoint_path());
  CheckGraph(ckpt, config);
  model->ImportFrom(ckpt);
  return model;
}

}  // namespace fgdm
