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

#include <chrono>
#include <cmath>

#include "doctest.h"
#include "fgdm/graph/graph.h"
#include "fgdm/graph/model.h"
#include "fgdm/graph/sampler.h"
#include "support/oracle_model.h"

namespace fgdm {
namespace {

using testing::OracleModel;
using testing::PlantedMaps;

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

// depth -> seg -> image, with the image reading both conditions.
GraphSpec ChainK2() {
  GraphSpec g;
  g.backbone = TinyBackbone();
  g.vocab_size = 9;
  auto factor = [](std::string name, VariableKind kind,
                   std::vector<std::string> parents, int size) {
    FactorSpec f;
    f.name = name;
    f.output = name;
    f.kind = kind;
    f.parents = std::move(parents);
    f.height = f.width = size;
    return f;
  };
  g.factors = {factor("depth", VariableKind::kDepth, {}, 8),
               factor("seg", VariableKind::kSegmentation, {"depth"}, 8),
               factor("image", VariableKind::kImage, {"seg", "depth"}, 16)};
  g.Validate();
  return g;
}

double Mse(const Tensor& a, const Tensor& b) { return MeanSquaredDiff(a, b); }

std::vector<SampleRequest> Requests(int n) {
  std::vector<SampleRequest> r;
  for (int i = 0; i < n; ++i) r.push_back({{2, 5}, static_cast<uint64_t>(100 + i)});
  return r;
}

TEST_CASE("graph validation") {
  GraphSpec g = ChainK2();
  CHECK(g.IndexOf("seg") == 1);
  CHECK(g.IndexOf("nope") == -1);
  CHECK(g.ParentIndices(2) == std::vector<int>{1, 0});
  CHECK(g.ConditionChannels(0) == 3);
  CHECK(g.ConditionChannels(2) == 6);

  GraphSpec bad = g;
  std::swap(bad.factors[0], bad.factors[1]);
  CHECK_THROWS_AS(bad.Validate(), std::invalid_argument);
  bad = g;
  std::swap(bad.factors[1], bad.factors[2]);
  CHECK_THROWS_AS(bad.Validate(), std::invalid_argument);
  bad = g;
  bad.factors[1].output = "depth";
  CHECK_THROWS_AS(bad.Validate(), std::invalid_argument);
  bad = g;
  bad.factors[1].name = "depth";
  CHECK_THROWS_AS(bad.Validate(), std::invalid_argument);
  bad = g;
  bad.factors[0].height = 7;
  CHECK_THROWS_AS(bad.Validate(), std::invalid_argument);
  bad = g;
  bad.factors[2].parents = {"seg", "seg"};
  CHECK_THROWS_AS(bad.Validate(), std::invalid_argument);
  bad = g;
  bad.factors[1].mode = ConditioningMode::kConcat;
  bad.factors[1].denoiser = TinyBackbone();
  CHECK_THROWS_AS(bad.Validate(), std::invalid_argument);  // wrong in_channels
  bad.factors[1].denoiser.in_channels = 6;
  CHECK_NOTHROW(bad.Validate());
}

TEST_CASE("graph json round trip and strict keys") {
  GraphSpec g = ChainK2();
  g.factors[1].mode = ConditioningMode::kConcat;
  g.factors[1].denoiser = TinyBackbone();
  g.factors[1].denoiser.in_channels = 6;
  const nlohmann::json j = g.ToJson();
  CHECK(GraphSpec::FromJson(j).ToJson() == j);
  nlohmann::json extra = j;
  extra["factors"][0]["colour"] = 1;
  CHECK_THROWS_AS(GraphSpec::FromJson(extra), std::invalid_argument);
  extra = j;
  extra["backbone"]["widht"] = 1;
  CHECK_THROWS_AS(GraphSpec::FromJson(extra), std::invalid_argument);
}

TEST_CASE("step alignment") {
  CHECK(AlignSteps(4, 4) == std::vector<int>{0, 1, 2, 3});
  CHECK(AlignSteps(10, 20) == std::vector<int>{0, 2, 4, 6, 8, 10, 12, 14, 16, 18});
  CHECK(AlignSteps(3, 10) == std::vector<int>{0, 3, 7});
  CHECK(AlignSteps(1, 5) == std::vector<int>{0});
  CHECK_THROWS(AlignSteps(0, 5));
  CHECK_THROWS(AlignSteps(6, 5));
}

TEST_CASE("K=1 chain shape contract") {
  GraphSpec g = MakeSegImageGraph(TinyBackbone(), 8, 16, 9);
  FgdmModel model(g, 1);
  SampleOptions o;
  o.sampler.steps = 20;
  o.overrides["seg"].steps = 10;
  const auto req = Requests(1);
  const JointSample s = SampleJoint(g, model, req, o);
  CHECK(s.latents.size() == 2);
  CHECK(s.latents.at("seg").shape() == Shape{1, 3, 8, 8});
  CHECK(s.latents.at("image").shape() == Shape{1, 3, 16, 16});
  CHECK(s.seconds.count("seg"));
  CHECK(s.seconds.count("image"));
}

TEST_CASE("oracle denoisers recover the planted maps") {
  const GraphSpec g = ChainK2();
  const auto req = Requests(2);
  const std::vector<Tensor> truth = PlantedMaps(g, 2, 5);
  const OracleModel oracle(NoiseSchedule(g.schedule), truth);
  SampleOptions o;
  o.sampler.steps = 20;
  o.sampler.eta = 0.0;
  for (InferenceMode mode : {InferenceMode::kJoint, InferenceMode::kSequential}) {
    o.mode = mode;
    const JointSample s = RunGraph(g, oracle, req, o);
    for (int i = 0; i < g.num_factors(); ++i) {
      INFO(g.factors[i].name);
      CHECK(Mse(s.latents.at(g.factors[i].output), truth[i]) < 1e-4);
    }
  }
  // Fewer condition steps and stochastic sampling still land on the truth.
  o.mode = InferenceMode::kJoint;
  o.overrides["depth"].steps = 10;
  o.overrides["seg"].steps = 5;
  o.sampler.eta = 1.0;
  const JointSample s = RunGraph(g, oracle, req, o);
  for (int i = 0; i < g.num_factors(); ++i) {
    CHECK(Mse(s.latents.at(g.factors[i].output), truth[i]) < 1e-4);
  }
}

TEST_CASE("joint sampling reads parents produced in the same step") {
  const GraphSpec g = ChainK2();
  const auto req = Requests(1);
  const OracleModel oracle(NoiseSchedule(g.schedule), PlantedMaps(g, 1, 6));
  SampleOptions o;
  o.sampler.steps = 6;
  o.trace = true;
  o.keep_trajectories = true;
  const JointSample s = SampleJoint(g, oracle, req, o);
  REQUIRE(s.trace.size() == 18);
  for (const TraceEvent& e : s.trace) {
    CHECK(e.factor_step == e.master_step);
    for (int v : e.parent_versions) CHECK(v == e.master_step);
  }
  // Order inside a step: parents first.
  for (size_t i = 0; i < s.trace.size(); ++i) CHECK(s.trace[i].factor == static_cast<int>(i % 3));
  // The tensors handed over are the parents' just-denoised latents.
  const auto& calls = oracle.calls();
  REQUIRE(calls.size() == 18);
  for (int j = 0; j < 6; ++j) {
    const auto& seg_call = calls[3 * j + 1];
    CHECK(seg_call.parents[0].BitwiseEqual(s.trajectories.at("depth")[j]));
    const auto& img_call = calls[3 * j + 2];
    CHECK(img_call.parents[0].BitwiseEqual(s.trajectories.at("seg")[j]));
    CHECK(img_call.parents[1].BitwiseEqual(s.trajectories.at("depth")[j]));
  }
}

TEST_CASE("heterogeneous step counts reuse the latest condition latent") {
  const GraphSpec g = ChainK2();
  const auto req = Requests(1);
  const OracleModel oracle(NoiseSchedule(g.schedule), PlantedMaps(g, 1, 6));
  SampleOptions o;
  o.sampler.steps = 8;
  o.overrides["depth"].steps = 4;
  o.overrides["seg"].steps = 2;
  o.trace = true;
  const JointSample s = SampleJoint(g, oracle, req, o);
  const std::vector<int> depth_pos = AlignSteps(4, 8);
  const std::vector<int> seg_pos = AlignSteps(2, 8);
  int image_steps = 0;
  for (const TraceEvent& e : s.trace) {
    if (e.factor != 2) continue;
    ++image_steps;
    int latest_seg = -1;
    for (int p : seg_pos) latest_seg = p <= e.master_step ? p : latest_seg;
    int latest_depth = -1;
    for (int p : depth_pos) latest_depth = p <= e.master_step ? p : latest_depth;
    CHECK(e.parent_versions == std::vector<int>{latest_seg, latest_depth});
  }
  CHECK(image_steps == 8);
}

TEST_CASE("sequential mode conditions on final parent maps") {
  const GraphSpec g = ChainK2();
  const auto req = Requests(1);
  const OracleModel oracle(NoiseSchedule(g.schedule), PlantedMaps(g, 1, 8));
  SampleOptions o;
  o.sampler.steps = 5;
  o.trace = true;
  const JointSample s = SampleSequential(g, oracle, req, o);
  const auto& calls = oracle.calls();
  REQUIRE(calls.size() == 15);
  for (int i = 0; i < 15; ++i) CHECK(calls[i].factor == i / 5);
  for (int i = 5; i < 10; ++i) CHECK(calls[i].parents[0].BitwiseEqual(s.latents.at("depth")));
  for (int i = 10; i < 15; ++i) {
    CHECK(calls[i].parents[0].BitwiseEqual(s.latents.at("seg")));
    CHECK(calls[i].parents[1].BitwiseEqual(s.latents.at("depth")));
  }
}

TEST_CASE("sequential wall time is the sum of per-factor chains") {
  GraphSpec g = MakeSegImageGraph(TinyBackbone(), 8, 16, 9);
  FgdmModel model(g, 2);
  SampleOptions o;
  o.sampler.steps = 10;
  const auto req = Requests(2);
  const auto start = std::chrono::steady_clock::now();
  const JointSample s = SampleSequential(g, model, req, o);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  double sum = 0.0;
  for (const auto& [name, sec] : s.seconds) sum += sec;
  CHECK(sum <= wall);
  CHECK(sum >= 0.9 * wall);
}

TEST_CASE("sampling is deterministic per seed") {
  GraphSpec g = MakeSegImageGraph(TinyBackbone(), 8, 16, 9);
  FgdmModel model(g, 3);
  SampleOptions o;
  o.sampler.steps = 4;
  o.sampler.eta = 0.5;
  o.sampler.guidance_scale = 2.0;
  const auto req = Requests(2);
  const JointSample a = SampleJoint(g, model, req, o);
  const JointSample b = SampleJoint(g, model, req, o);
  for (const auto& [v, t] : a.latents) CHECK(t.BitwiseEqual(b.latents.at(v)));
  std::vector<SampleRequest> other = req;
  other[1].seed = 999;
  const JointSample c = SampleJoint(g, model, other, o);
  CHECK(c.Latent("seg", 0).BitwiseEqual(a.Latent("seg", 0)));
  CHECK(!c.Latent("seg", 1).BitwiseEqual(a.Latent("seg", 1)));
}

TEST_CASE("batch composition does not change a sample") {
  GraphSpec g = MakeSegImageGraph(TinyBackbone(), 8, 16, 9);
  FgdmModel model(g, 4);
  SampleOptions o;
  o.sampler.steps = 3;
  o.sampler.guidance_scale = 3.0;
  const auto req = Requests(3);
  const JointSample all = SampleJoint(g, model, req, o);
  for (int i = 0; i < 3; ++i) {
    const JointSample one = SampleJoint(g, model, std::span(req).subspan(i, 1), o);
    CHECK(one.latents.at("seg").BitwiseEqual(all.Latent("seg", i)));
    CHECK(one.latents.at("image").BitwiseEqual(all.Latent("image", i)));
  }
}

TEST_CASE("subset inference") {
  const GraphSpec g = ChainK2();
  FgdmModel model(g, 5);
  SampleOptions o;
  o.sampler.steps = 3;
  o.sampler.guidance_scale = 2.0;
  const auto req = Requests(1);
  const JointSample joint = SampleJoint(g, model, req, o);
  const JointSample all = SampleSubset(g, model, {"depth", "seg", "image"}, req, o);
  for (const auto& [v, t] : joint.latents) CHECK(t.BitwiseEqual(all.latents.at(v)));

  const JointSample image_only = SampleSubset(g, model, {"image"}, req, o);
  CHECK(image_only.latents.size() == 1);
  CHECK(image_only.latents.at("image").shape() == Shape{1, 3, 16, 16});

  const JointSample skip = SampleSubset(g, model, {"depth", "image"}, req, o);
  CHECK(skip.latents.size() == 2);
  CHECK(skip.latents.at("depth").BitwiseEqual(joint.latents.at("depth")));
  CHECK(skip.latents.at("image").shape() == Shape{1, 3, 16, 16});

  CHECK_THROWS_AS(SampleSubset(g, model, {}, req, o), std::invalid_argument);
  CHECK_THROWS_AS(SampleSubset(g, model, {"pose"}, req, o), std::invalid_argument);
  CHECK_THROWS_AS(SampleSubset(g, model, {"seg"}, req, o, {"image"}),
                  std::invalid_argument);
}

TEST_CASE("all-null conditions reduce to the plain backbone sample") {
  GraphSpec g = MakeSegImageGraph(TinyBackbone(), 8, 16, 9);
  FgdmModel model(g, 6);
  // Make the adapter non-trivial so the identity is not an accident of
  // zero initialization.
  RngStream rng(1, "perturb");
  for (Parameter* p : model.adapter(1)->params().List()) {
    p->value = Add(p->value, Scale(rng.NormalTensor(p->value.shape()), 0.1f));
  }
  for (double scale : {1.0, 2.5}) {
    SampleOptions o;
    o.sampler.steps = 5;
    o.sampler.eta = 0.3;
    o.sampler.guidance_scale = scale;
    const auto req = Requests(2);
    const JointSample s = SampleSubset(g, model, {"image"}, req, o);
    const Tensor plain = SamplePlain(model.backbone(), model.text(),
                                     NoiseSchedule(g.schedule), 16, 16, req,
                                     o.sampler, "image");
    CHECK(s.latents.at("image").BitwiseEqual(plain));
    const JointSample joint = SampleJoint(g, model, req, o);
    CHECK(!joint.latents.at("image").BitwiseEqual(plain));
  }
}

TEST_CASE("replayed trajectory reproduces the joint image") {
  GraphSpec g = MakeSegImageGraph(TinyBackbone(), 8, 16, 9);
  FgdmModel model(g, 7);
  RngStream rng(2, "perturb");
  for (Parameter* p : model.adapter(1)->params().List()) {
    p->value = Add(p->value, Scale(rng.NormalTensor(p->value.shape()), 0.1f));
  }
  SampleOptions o;
  o.sampler.steps = 6;
  o.overrides["seg"].steps = 3;
  o.keep_trajectories = true;
  const auto req = Requests(1);
  const JointSample joint = SampleJoint(g, model, req, o);
  // Condition-only pass, then the image factor alone on the recording.
  const JointSample cond = SampleSubset(g, model, {"seg"}, req, o);
  CHECK(cond.latents.at("seg").BitwiseEqual(joint.latents.at("seg")));
  SampleOptions replay = o;
  replay.sources["seg"] = VariableSource::Trajectory(cond.trajectories.at("seg"));
  const JointSample image = SampleJoint(g, model, req, replay);
  CHECK(image.latents.at("image").BitwiseEqual(joint.latents.at("image")));
  CHECK(image.seconds.count("seg") == 0);

  // Renoised and fixed sources run and differ from each other.
  SampleOptions fixed = o;
  fixed.sources["seg"] = VariableSource::Fixed(joint.latents.at("seg"));
  SampleOptions renoised = o;
  renoised.sources["seg"] = VariableSource::Renoised(joint.latents.at("seg"));
  const Tensor a = SampleJoint(g, model, req, fixed).latents.at("image");
  const Tensor b = SampleJoint(g, model, req, renoised).latents.at("image");
  CHECK(!a.BitwiseEqual(b));
  CHECK(a.AllFinite());
  CHECK(b.AllFinite());

  SampleOptions wrong = o;
  wrong.sources["seg"] = VariableSource::Fixed(Tensor({1, 3, 4, 4}));
  CHECK_THROWS_AS(SampleJoint(g, model, req, wrong), std::invalid_argument);
  CHECK_THROWS_AS(SampleJoint(g, model, std::span<const SampleRequest>(), o),
                  std::invalid_argument);
}

TEST_CASE("latent conversions") {
  Tensor img({2, 2, 3}, {0, 0.5f, 1, 0.25f, 0.75f, 0, 1, 1, 1, 0, 0, 0});
  const Tensor z = LatentFromUnitImage(img);
  CHECK(z.shape() == Shape{1, 3, 2, 2});
  CHECK(z.at({0, 0, 0, 0}) == -1.0f);
  CHECK(z.at({0, 2, 0, 0}) == 1.0f);
  CHECK(UnitImageFromLatent(z).BitwiseEqual(img));
  Tensor depth({2, 2}, {0, 0.5f, 1, 0.25f});
  CHECK(MaxAbsDiff(DepthFromLatent(LatentFromDepth(depth)), depth) < 1e-6f);
}

}  // namespace
}  // namespace fgdm
