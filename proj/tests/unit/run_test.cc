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

#include <fstream>

#include "doctest.h"
#include "fgdm/graph/sampler.h"
#include "fgdm/service/run.h"
#include "support/tiny_run.h"

namespace fgdm {
namespace {

using testing::ScratchDir;
using testing::TinyRunConfig;

TEST_CASE("toy config is valid and round-trips") {
  const RunConfig toy = RunConfig::Toy();
  CHECK(RunConfig::FromJson(toy.ToJson()).ToJson() == toy.ToJson());
  CHECK(toy.dataset.size - toy.dataset.val == 2000);
}

TEST_CASE("serialize(parse(x)) is the normalized form of x") {
  // Only the graph is required; everything else takes defaults.
  const nlohmann::json minimal = {{"graph", RunConfig::Toy().graph.ToJson()}};
  const RunConfig parsed = RunConfig::FromJson(minimal);
  const nlohmann::json normalized = parsed.ToJson();
  CHECK(normalized.at("graph") == minimal.at("graph"));
  CHECK(normalized.contains("sbpc"));
  CHECK(RunConfig::FromJson(normalized).ToJson() == normalized);
}

TEST_CASE("unknown keys are rejected at every level") {
  const nlohmann::json base = RunConfig::Toy().ToJson();
  const std::vector<nlohmann::json::json_pointer> objects = {
      nlohmann::json::json_pointer(""),
      nlohmann::json::json_pointer("/dataset"),
      nlohmann::json::json_pointer("/dataset/world"),
      nlohmann::json::json_pointer("/graph"),
      nlohmann::json::json_pointer("/graph/backbone"),
      nlohmann::json::json_pointer("/graph/schedule"),
      nlohmann::json::json_pointer("/graph/factors/0"),
      nlohmann::json::json_pointer("/sampler"),
      nlohmann::json::json_pointer("/train"),
      nlohmann::json::json_pointer("/train/teacher"),
      nlohmann::json::json_pointer("/train/factors/optimizer"),
      nlohmann::json::json_pointer("/sbpc"),
      nlohmann::json::json_pointer("/service")};
  for (const auto& ptr : objects) {
    nlohmann::json j = base;
    j[ptr]["surprise"] = 1;
    CAPTURE(ptr.to_string());
    CHECK_THROWS_AS(RunConfig::FromJson(j), std::invalid_argument);
  }
}

TEST_CASE("config values are checked") {
  nlohmann::json j = RunConfig::Toy().ToJson();
  j["sampler"]["steps"] = "twenty";
  CHECK_THROWS_AS(RunConfig::FromJson(j), std::invalid_argument);
  j = RunConfig::Toy().ToJson();
  j["graph"]["factors"][0]["height"] = 8;
  j["graph"]["factors"][0]["width"] = 8;
  CHECK_THROWS_AS(RunConfig::FromJson(j), std::invalid_argument);
  j = RunConfig::Toy().ToJson();
  j["graph"]["vocab_size"] = 20;
  CHECK_THROWS_AS(RunConfig::FromJson(j), std::invalid_argument);
  j = RunConfig::Toy().ToJson();
  j.erase("graph");
  CHECK_THROWS_AS(RunConfig::FromJson(j), std::invalid_argument);
  j = RunConfig::Toy().ToJson();
  j["dataset"]["val"] = j["dataset"]["size"];
  CHECK_THROWS_AS(RunConfig::FromJson(j), std::invalid_argument);

  const auto dir = ScratchDir("config_load");
  CHECK_THROWS_AS(RunConfig::Load(dir / "missing.json"), IoError);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(RunConfig::Load(dir / "bad.json"), std::invalid_argument);
}

TEST_CASE("run lock is exclusive") {
  const auto dir = ScratchDir("lock");
  {
    RunLock a(dir / "train.lock");
    CHECK_THROWS_AS(RunLock(dir / "train.lock"), IoError);
  }
  RunLock again(dir / "train.lock");
  CHECK(std::filesystem::exists(dir / "train.lock"));
}

TEST_CASE("dataset encoding") {
  const auto dir = ScratchDir("encode");
  const RunConfig c = TinyRunConfig(dir);
  const Dataset ds = GenerateDataset(6, 2, 1, c.dataset.world);
  const EncodedDataset e = EncodeDataset(ds, c.graph);
  CHECK(e.latents.at("seg").shape() == Shape{6, 3, 8, 8});
  CHECK(e.latents.at("image").shape() == Shape{6, 3, 16, 16});
  // Segmentation latents decode back to the labels.
  const Tensor one = SliceBatch(e.latents.at("seg"), 4);
  CHECK(DecodeMap(UnitImageFromLatent(one), ds.palette()) == ds.records[4].segmentation);
  const TrainBatch b = GatherBatch(e, {4, 0, 4});
  CHECK(b.prompts.size() == 3);
  CHECK(b.prompts[0] == e.prompts[4]);
  CHECK(SliceBatch(b.latents.at("image"), 2).BitwiseEqual(SliceBatch(e.latents.at("image"), 4)));

  RunConfig wrong = c;
  wrong.graph.factors[0].height = wrong.graph.factors[0].width = 16;
  CHECK_THROWS_AS(EncodeDataset(ds, wrong.graph), std::invalid_argument);
}

TEST_CASE("interrupted training resumes to the same checkpoint") {
  const auto dir = ScratchDir("resume");
  RunConfig once = TinyRunConfig(dir / "once");
  RunConfig split = TinyRunConfig(dir / "split");
  const Dataset ds = GenerateDataset(12, 4, 1, once.dataset.world);

  const TrainSummary full = TrainRun(once, ds, -1);
  CHECK(full.finished);
  CHECK(full.steps_run == 6);

  TrainSummary part = TrainRun(split, ds, 2);
  CHECK(part.teacher_steps == 2);
  CHECK_FALSE(part.finished);
  part = TrainRun(split, ds, 2);
  CHECK(part.teacher_steps == 3);
  CHECK(part.factor_steps == 1);
  part = TrainRun(split, ds, -1);
  CHECK(part.finished);
  CHECK(part.steps_run == 2);
  CHECK(ReadFileBytes(once.checkpoint_path()) == ReadFileBytes(split.checkpoint_path()));

  // Nothing left to do.
  CHECK(TrainRun(split, ds, -1).steps_run == 0);
  CHECK(ReadFileBytes(once.checkpoint_path()) == ReadFileBytes(split.checkpoint_path()));

  // save -> load -> save is byte-identical.
  const Checkpoint loaded = Checkpoint::Load(once.checkpoint_path());
  loaded.Save(dir / "again.fgdm");
  CHECK(ReadFileBytes(dir / "again.fgdm") == ReadFileBytes(once.checkpoint_path()));

  const auto model = LoadTrainedModel(once);
  Checkpoint exported;
  model->ExportTo(exported);
  for (const auto& [name, t] : exported.tensors) {
    CAPTURE(name);
    CHECK(t.BitwiseEqual(loaded.Get(name)));
  }
  CHECK_FALSE(std::filesystem::exists(std::filesystem::path(once.output_dir) / "train.lock"));
}

TEST_CASE("training refuses a locked run directory") {
  const auto dir = ScratchDir("locked");
  const RunConfig c = TinyRunConfig(dir);
  const Dataset ds = GenerateDataset(12, 4, 1, c.dataset.world);
  RunLock held(std::filesystem::path(c.output_dir) / "train.lock");
  CHECK_THROWS_AS(TrainRun(c, ds, 1), IoError);
}

TEST_CASE("loading a trained model") {
  const auto dir = ScratchDir("load");
  RunConfig c = TinyRunConfig(dir);
  CHECK_THROWS_AS(LoadTrainedModel(c), MissingCheckpoint);
  const Dataset ds = GenerateDataset(12, 4, 1, c.dataset.world);
  TrainRun(c, ds, 1);
  CHECK(LoadTrainedModel(c) != nullptr);
  c.graph.factors[0].mode = ConditioningMode::kConcat;
  c.graph.factors[0].denoiser = c.graph.backbone;
  CHECK_THROWS_AS(LoadTrainedModel(c), std::invalid_argument);
}

}  // namespace
}  // namespace fgdm
