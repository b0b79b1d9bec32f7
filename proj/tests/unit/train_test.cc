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

#include <cmath>

#include "doctest.h"
#include "fgdm/graph/train.h"
#include "fgdm/numerics/rng.h"

namespace fgdm {
namespace {

DenoiserConfig TinyBackbone() {
  DenoiserConfig c;
  c.base_channels = 4;
  c.channel_mult = {1, 2};
  c.attention_scales = {1};
  c.head_channels = 4;
  c.prompt_dim = 6;
  c.max_tokens = 4;
  c.norm_groups = 2;
  c.time_dim = 8;
  return c;
}

GraphSpec SegImage(ConditioningMode mode = ConditioningMode::kAdapter) {
  GraphSpec g = MakeSegImageGraph(TinyBackbone(), 8, 16, 9, mode);
  if (mode == ConditioningMode::kConcat) {
    g.factors[0].denoiser = TinyBackbone();
    g.Validate();
  }
  return g;
}

TrainBatch RandomBatch(const GraphSpec& g, int64_t n, uint64_t seed) {
  TrainBatch b;
  RngStream rng(seed, "batch");
  for (int64_t e = 0; e < n; ++e) {
    b.prompts.push_back({static_cast<int>(2 + e % 3), static_cast<int>(5 + e % 4)});
  }
  for (const FactorSpec& f : g.factors) {
    b.latents[f.output] = rng.UniformTensor({n, 3, f.height, f.width}, -1, 1);
  }
  return b;
}

TrainConfig Config(double p, double lambda) {
  TrainConfig c;
  c.dropout_prob = p;
  c.lambda_kl = lambda;
  c.batch_size = 2;
  c.optimizer.learning_rate = 1e-2f;
  c.seed = 9;
  return c;
}

TEST_CASE("dropout plan frequency and subset law") {
  RngStream rng(1, "plan");
  int64_t dropped = 0;
  std::vector<int> sizes(4, 0);
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    const DropoutPlan plan = PlanDropout(rng, 1, 3, 0.2);
    dropped += plan.CountDropped();
    int size = 0;
    for (uint8_t d : plan.dropped[0]) size += d;
    ++sizes[size];
  }
  CHECK(std::abs(dropped / double(trials) - 0.2) < 0.02);
  CHECK(sizes[3] == 0);  // never every variable
  CHECK(sizes[0] == trials - dropped);
  // Subset size is uniform over 1..M-1.
  CHECK(std::abs(sizes[1] - sizes[2]) < 0.15 * dropped);
  // With a single variable the prompt alone is dropped.
  const DropoutPlan one = PlanDropout(rng, 5000, 1, 0.5);
  CHECK(std::abs(one.CountDropped() / 5000.0 - 0.5) < 0.03);
  CHECK_THROWS(PlanDropout(rng, 1, 0, 0.2));
}

TEST_CASE("config validation and json") {
  TrainConfig c = Config(0.2, 0.5);
  c.factors = {"seg"};
  CHECK(TrainConfig::FromJson(c.ToJson()).ToJson() == c.ToJson());
  nlohmann::json j = c.ToJson();
  j["dropuot"] = 0.1;
  CHECK_THROWS_AS(TrainConfig::FromJson(j), std::invalid_argument);
  c.dropout_prob = 1.0;
  CHECK_THROWS(c.Validate());
  c = Config(0.2, -1);
  CHECK_THROWS(c.Validate());
}

TEST_CASE("loss reduces to the sum of factor losses") {
  const GraphSpec g = SegImage();
  FgdmModel model(g, 1);
  Trainer trainer(model, Config(0.0, 0.0), TrainingStage::kFactors);
  const TrainBatch batch = RandomBatch(g, 2, 1);
  for (int i = 0; i < 3; ++i) {
    const LossBreakdown l = trainer.Step(batch);
    CHECK(l.factor_mse.size() == 2);
    CHECK(l.kl == 0.0);
    CHECK(l.total == l.factor_mse.at("seg") + l.factor_mse.at("image"));
    CHECK(l.dropout.CountDropped() == 0);
  }
  CHECK(trainer.step() == 3);
}

TEST_CASE("factor losses do not depend on other factors' draws") {
  const GraphSpec g = SegImage();
  const TrainBatch batch = RandomBatch(g, 2, 2);
  FgdmModel a(g, 1);
  FgdmModel b(g, 1);
  TrainConfig only_seg = Config(0.2, 0.0);
  only_seg.factors = {"seg"};
  Trainer ta(a, only_seg, TrainingStage::kFactors);
  Trainer tb(b, Config(0.2, 0.0), TrainingStage::kFactors);
  const LossBreakdown la = ta.Step(batch);
  const LossBreakdown lb = tb.Step(batch);
  CHECK(la.factor_mse.size() == 1);
  CHECK(la.factor_mse.at("seg") == lb.factor_mse.at("seg"));
}

TEST_CASE("distillation term") {
  const GraphSpec g = SegImage();
  FgdmModel model(g, 2);
  Trainer trainer(model, Config(0.0, 1.0), TrainingStage::kFactors);
  const TrainBatch batch = RandomBatch(g, 2, 3);
  // A fresh adapter has zero output, so the student equals the teacher.
  const LossBreakdown first = trainer.Step(batch);
  CHECK(std::abs(first.kl) < 1e-9);
  LossBreakdown later;
  for (int i = 0; i < 4; ++i) later = trainer.Step(batch);
  CHECK(later.kl > 0.0);
  CHECK(std::abs(later.total - (later.factor_mse.at("seg") +
                                later.factor_mse.at("image") + later.kl)) < 1e-6);
}

TEST_CASE("backbone stays frozen in the factor stage") {
  const GraphSpec g = SegImage();
  FgdmModel model(g, 3);
  const uint64_t backbone = model.BackboneChecksum();
  const uint64_t adapter = model.adapter(0)->params().Checksum();
  Trainer trainer(model, Config(0.2, 0.1), TrainingStage::kFactors);
  for (int i = 0; i < 100; ++i) trainer.Step(RandomBatch(g, 2, 100 + i));
  CHECK(model.BackboneChecksum() == backbone);
  CHECK(model.adapter(0)->params().Checksum() != adapter);

  model.backbone().params().SetTrainable(true);
  CHECK_THROWS_AS(trainer.Step(RandomBatch(g, 2, 1)), std::logic_error);
}

TEST_CASE("missing modality is rejected") {
  const GraphSpec g = SegImage();
  FgdmModel model(g, 4);
  Trainer trainer(model, Config(0.2, 0.0), TrainingStage::kFactors);
  TrainBatch batch = RandomBatch(g, 2, 4);
  batch.latents.erase("seg");
  CHECK_THROWS_AS(trainer.Step(batch), std::invalid_argument);
}

TEST_CASE("step dropout follows the planned draws") {
  const GraphSpec g = SegImage();
  FgdmModel model(g, 5);
  Trainer trainer(model, Config(0.5, 0.0), TrainingStage::kFactors);
  for (int i = 0; i < 5; ++i) {
    const DropoutPlan expected = trainer.PlannedDropout(trainer.step(), 4);
    const LossBreakdown l = trainer.Step(RandomBatch(g, 4, i));
    CHECK(l.dropout.dropped == expected.dropped);
  }
}

TEST_CASE("teacher stage learns a fixed batch") {
  const GraphSpec g = SegImage();
  FgdmModel model(g, 6);
  const uint64_t adapter = model.adapter(1)->params().Checksum();
  TrainConfig c = Config(0.0, 0.0);
  c.optimizer.learning_rate = 3e-3f;
  Trainer trainer(model, c, TrainingStage::kTeacher);
  const TrainBatch batch = RandomBatch(g, 4, 5);
  double first = 0.0;
  double last = 0.0;
  for (int i = 0; i < 60; ++i) {
    const LossBreakdown l = trainer.Step(batch);
    if (i < 5) first += l.total;
    if (i >= 55) last += l.total;
  }
  CHECK(last < first);
  CHECK(model.adapter(1)->params().Checksum() == adapter);
}

TEST_CASE("optimizer state resumes exactly") {
  const GraphSpec g = SegImage();
  FgdmModel a(g, 7);
  Trainer ta(a, Config(0.2, 0.1), TrainingStage::kFactors);
  for (int i = 0; i < 3; ++i) ta.Step(RandomBatch(g, 2, i));
  Checkpoint ckpt;
  a.ExportTo(ckpt);
  ta.ExportTo(ckpt);
  const Checkpoint loaded = Checkpoint::Deserialize(ckpt.Serialize());

  FgdmModel b(g, 99);
  b.ImportFrom(loaded);
  Trainer tb(b, Config(0.2, 0.1), TrainingStage::kFactors);
  tb.ImportFrom(loaded);
  CHECK(tb.step() == 3);
  const LossBreakdown la = ta.Step(RandomBatch(g, 2, 3));
  const LossBreakdown lb = tb.Step(RandomBatch(g, 2, 3));
  CHECK(la.total == lb.total);
  CHECK(la.dropout.dropped == lb.dropout.dropped);
  for (int i = 0; i < 2; ++i) {
    CHECK(a.adapter(i)->params().Checksum() == b.adapter(i)->params().Checksum());
  }
}

TEST_CASE("concat mode trains its own network") {
  const GraphSpec g = SegImage(ConditioningMode::kConcat);
  FgdmModel model(g, 8);
  CHECK(model.adapter(0) == nullptr);
  REQUIRE(model.network(0) != nullptr);
  const uint64_t before = model.network(0)->params().Checksum();
  const uint64_t backbone = model.BackboneChecksum();
  Trainer trainer(model, Config(0.2, 0.1), TrainingStage::kFactors);
  const LossBreakdown l = trainer.Step(RandomBatch(g, 2, 1));
  CHECK(std::isfinite(l.total));
  CHECK(model.network(0)->params().Checksum() != before);
  CHECK(model.BackboneChecksum() == backbone);
}

}  // namespace
}  // namespace fgdm
