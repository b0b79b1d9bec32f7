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

#ifndef FGDM_SERVICE_RUN_CONFIG_H_
#define FGDM_SERVICE_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "fgdm/diffusion/schedule.h"
#include "fgdm/graph/graph.h"
#include "fgdm/graph/train.h"
#include "fgdm/sbpc/sbpc.h"
#include "fgdm/toyworld/toyworld.h"

namespace fgdm {

struct DatasetSettings {
  std::string path = "data/toy";
  int size = 2200;
  int val = 200;
  uint64_t seed = 1;
  WorldConfig world;
};

struct TrainSettings {
  TrainConfig teacher;
  TrainConfig factors;
  int checkpoint_every = 250;
};

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 2;
};

// Everything a run needs. Parsing rejects unknown keys at every level; the
// published schema is docs/run_config.schema.json.
struct RunConfig {
  uint64_t seed = 0;
  std::string output_dir = "runs/toy";
  DatasetSettings dataset;
  GraphSpec graph;
  SamplerConfig sampler;
  TrainSettings train;
  SbpcConfig sbpc;
  ServiceSettings service;

  // Throws std::invalid_argument, including when the graph does not match
  // the toy world (map sizes, vocabulary).
  void Validate() const;
  nlohmann::json ToJson() const;
  static RunConfig FromJson(const nlohmann::json& j);
  // IoError when unreadable; std::invalid_argument on a schema violation.
  static RunConfig Load(const std::filesystem::path& path);

  std::filesystem::path checkpoint_path() const;

  // The seg -> image toy setup.
  static RunConfig Toy();
};

nlohmann::json SamplerToJson(const SamplerConfig& s);
SamplerConfig SamplerFromJson(const nlohmann::json& j);

}  // namespace fgdm

#endif  // FGDM_SERVICE_RUN_CONFIG_H_
