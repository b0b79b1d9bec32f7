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

#include "fgdm/service/run_config.h"

#include <stdexcept>

#include "fgdm/numerics/checkpoint.h"
#include "fgdm/numerics/json_keys.h"

namespace fgdm {

nlohmann::json SamplerToJson(const SamplerConfig& s) {
  return {{"steps", s.steps},
          {"eta", s.eta},
          {"guidance_scale", s.guidance_scale},
          {"clip_x0", s.clip_x0}};
}

SamplerConfig SamplerFromJson(const nlohmann::json& j) {
  RequireKnownKeys(j, {"steps", "eta", "guidance_scale", "clip_x0"}, "sampler");
  SamplerConfig s;
  s.steps = j.value("steps", s.steps);
  s.eta = j.value("eta", s.eta);
  s.guidance_scale = j.value("guidance_scale", s.guidance_scale);
  s.clip_x0 = j.value("clip_x0", s.clip_x0);
  return s;
}

void RunConfig::Validate() const {
  graph.Validate();
  dataset.world.Validate();
  sampler.Validate(NoiseSchedule(graph.schedule).T());
  train.teacher.Validate();
  train.factors.Validate();
  sbpc.Validate();
  if (output_dir.empty()) throw std::invalid_argument("output_dir must be set");
  if (dataset.size < 2 || dataset.val < 1 || dataset.val >= dataset.size) {
    throw std::invalid_argument("dataset needs size >= 2 and 1 <= val < size");
  }
  if (train.checkpoint_every < 1) throw std::invalid_argument("checkpoint_every must be positive");
  if (service.workers < 1) throw std::invalid_argument("service needs at least one worker");
  if (service.port < 0 || service.port > 65535) throw std::invalid_argument("bad service port");
  const WorldConfig& w = dataset.world;
  if (graph.vocab_size != Vocabulary(w.num_classes).size()) {
    throw std::invalid_argument("graph vocab_size must be " +
                                std::to_string(Vocabulary(w.num_classes).size()) +
                                " for " + std::to_string(w.num_classes) + " classes");
  }
  for (const FactorSpec& f : graph.factors) {
    const int want = f.kind == VariableKind::kImage ? w.image_size : w.cond_size;
    if (f.height != want || f.width != want) {
      throw std::invalid_argument("factor \"" + f.name + "\" must be " +
                                  std::to_string(want) + "x" + std::to_string(want) +
                                  " to match the dataset");
    }
  }
}

nlohmann::json RunConfig::ToJson() const {
  return {{"seed", seed},
          {"output_dir", output_dir},
          {"dataset",
           {{"path", dataset.path},
            {"size", dataset.size},
            {"val", dataset.val},
            {"seed", dataset.seed},
            {"world", dataset.world.ToJson()}}},
          {"graph", graph.ToJson()},
          {"sampler", SamplerToJson(sampler)},
          {"train",
           {{"teacher", train.teacher.ToJson()},
            {"factors", train.factors.ToJson()},
            {"checkpoint_every", train.checkpoint_every}}},
          {"sbpc", sbpc.ToJson()},
          {"service",
           {{"host", service.host}, {"port", service.port}, {"workers", service.workers}}}};
}

RunConfig RunConfig::FromJson(const nlohmann::json& j) {
  RequireKnownKeys(j, {"seed", "output_dir", "dataset", "graph", "sampler", "train",
                       "sbpc", "service"},
                   "run config");
  try {
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      RequireKnownKeys(d, {"path", "size", "val", "seed", "world"}, "dataset");
      c.dataset.path = d.value("path", c.dataset.path);
      c.dataset.size = d.value("size", c.dataset.size);
      c.dataset.val = d.value("val", c.dataset.val);
      c.dataset.seed = d.value("seed", c.dataset.seed);
      if (d.contains("world")) c.dataset.world = WorldConfig::FromJson(d.at("world"));
    }
    c.graph = GraphSpec::FromJson(j.at("graph"));
    if (j.contains("sampler")) c.sampler = SamplerFromJson(j.at("sampler"));
    if (j.contains("train")) {
      const auto& t = j.at("train");
      RequireKnownKeys(t, {"teacher", "factors", "checkpoint_every"}, "train");
      if (t.contains("teacher")) c.train.teacher = TrainConfig::FromJson(t.at("teacher"));
      if (t.contains("factors")) c.train.factors = TrainConfig::FromJson(t.at("factors"));
      c.train.checkpoint_every = t.value("checkpoint_every", c.train.checkpoint_every);
    }
    if (j.contains("sbpc")) c.sbpc = SbpcConfig::FromJson(j.at("sbpc"));
    if (j.contains("service")) {
      const auto& s = j.at("service");
      RequireKnownKeys(s, {"host", "port", "workers"}, "service");
      c.service.host = s.value("host", c.service.host);
      c.service.port = s.value("port", c.service.port);
      c.service.workers = s.value("workers", c.service.workers);
    }
    c.Validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    // Wrong value types and missing required keys.
    throw std::invalid_argument(std::string("run config: ") + e.what());
  }
}

RunConfig RunConfig::Load(const std::filesystem::path& path) {
  const std::string text = ReadFileBytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return FromJson(j);
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return std::filesystem::path(output_dir) / "checkpoint.fgdm";
}

RunConfig RunConfig::Toy() {
  RunConfig c;
  c.dataset.world = WorldConfig{};
  DenoiserConfig backbone;
  backbone.base_channels = 16;
  backbone.channel_mult = {1, 2, 2};
  backbone.attention_scales = {1, 2};
  backbone.head_channels = 16;
  backbone.prompt_dim = 32;
  backbone.max_tokens = 8;
  backbone.norm_groups = 4;
  backbone.time_dim = 32;
  c.graph = MakeSegImageGraph(backbone, c.dataset.world.cond_size,
                              c.dataset.world.image_size,
                              Vocabulary(c.dataset.world.num_classes).size());
  c.sampler.steps = 20;
  c.sampler.guidance_scale = 2.0;
  c.train.teacher.steps = 2000;
  c.train.teacher.optimizer.learning_rate = 1e-3f;
  c.train.factors.steps = 3000;
  c.train.factors.optimizer.learning_rate = 1e-3f;
  c.sbpc.guidance_scale = c.sampler.guidance_scale;
  c.Validate();
  return c;
}

}  // namespace fgdm
