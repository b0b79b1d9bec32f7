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

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "doctest.h"
#include "fgdm/numerics/checkpoint.h"
#include "fgdm/service/run_config.h"
#include "support/tiny_run.h"

namespace fgdm {
namespace {

namespace fs = std::filesystem;
using testing::ScratchDir;
using testing::TinyRunConfig;

int Run(const std::string& args) {
  const std::string cmd = std::string(FGDM_BINARY) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path WriteConfig(const fs::path& dir, const nlohmann::json& j) {
  const fs::path path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

std::map<std::string, std::string> ReadTree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = ReadFileBytes(e.path());
  }
  return out;
}

TEST_CASE("exit codes") {
  const auto dir = ScratchDir("cli_codes");
  const RunConfig c = TinyRunConfig(dir);
  nlohmann::json j = c.ToJson();
  const fs::path good = WriteConfig(dir, j);

  CHECK(Run("") == 2);
  CHECK(Run("sample --config " + good.string()) == 2);  // --prompt missing
  CHECK(Run("sample --config " + (dir / "nope.json").string() + " --prompt circle") == 4);
  j["sampler"]["stesp"] = 3;
  fs::create_directories(dir / "bad");
  CHECK(Run("sample --config " + WriteConfig(dir / "bad", j).string() + " --prompt circle") == 2);
  CHECK(Run("sample --config " + good.string() + " --prompt circle") == 3);
  CHECK(Run("sbpc --config " + good.string() + " --prompt circle") == 3);
  CHECK(Run("serve --config " + good.string()) == 3);
  CHECK(Run("train --config " + good.string()) == 4);  // no dataset yet
  CHECK(Run("init-config") == 0);
}

TEST_CASE("dataset, resumable training, deterministic sample and sbpc") {
  const auto dir = ScratchDir("cli_flow");
  const RunConfig c = TinyRunConfig(dir);
  const std::string cfg = "--config " + WriteConfig(dir, c.ToJson()).string();

  REQUIRE(Run("dataset " + cfg) == 0);
  CHECK(fs::exists(fs::path(c.dataset.path)));

  REQUIRE(Run("train " + cfg + " --steps 2") == 0);
  Checkpoint ckpt = Checkpoint::Load(c.checkpoint_path());
  CHECK(ckpt.meta.at("optim").at("teacher").at("step") == 2);
  REQUIRE(Run("train " + cfg + " --steps 2") == 0);
  ckpt = Checkpoint::Load(c.checkpoint_path());
  CHECK(ckpt.meta.at("optim").at("teacher").at("step") == 3);
  CHECK(ckpt.meta.at("optim").at("factors").at("step") == 1);
  REQUIRE(Run("train " + cfg) == 0);
  ckpt = Checkpoint::Load(c.checkpoint_path());
  CHECK(ckpt.meta.at("optim").at("factors").at("step") == 3);
  CHECK(Checkpoint::Deserialize(ckpt.Serialize()).Serialize() == ReadFileBytes(c.checkpoint_path()));

  const std::string sample = "sample " + cfg + " --prompt \"circle square\" --seed 7 --n 2 --out ";
  REQUIRE(Run(sample + (dir / "s1").string()) == 0);
  REQUIRE(Run(sample + (dir / "s2").string()) == 0);
  const auto s1 = ReadTree(dir / "s1");
  CHECK(s1.count("image_1.ppm") == 1);
  CHECK(s1.count("seg_0.ppm") == 1);
  CHECK(s1 == ReadTree(dir / "s2"));

  const std::string sbpc = "sbpc " + cfg + " --n 3 --t-cond 3 --t-img 4 --recall-target 0.5 "
                           "--max-trials 3 --out ";
  REQUIRE(Run(sbpc + (dir / "b1").string()) == 0);
  REQUIRE(Run(sbpc + (dir / "b2").string()) == 0);
  const std::string report = ReadFileBytes(dir / "b1" / "report.json");
  CHECK(report == ReadFileBytes(dir / "b2" / "report.json"));
  CHECK(ReadFileBytes(dir / "b1" / "trials.json") == ReadFileBytes(dir / "b2" / "trials.json"));
  const nlohmann::json r = nlohmann::json::parse(report);
  CHECK(r.at("reports").size() == 4);  // the validation prompts
  for (const char* key : {"recalls", "avg", "min", "max", "median", "count_at_least",
                          "selected", "selected_recall"}) {
    CHECK(r.at("reports")[0].contains(key));
  }
  CHECK(nlohmann::json::parse(ReadFileBytes(dir / "b1" / "timing.json"))[0].contains("condition"));

  REQUIRE(Run("eval " + cfg + " --limit 4 --steps 3 --out " + (dir / "e").string()) == 0);
  const nlohmann::json e = nlohmann::json::parse(ReadFileBytes(dir / "e" / "eval.json"));
  CHECK(e.at("modes").contains("joint"));
  CHECK(e.at("modes").contains("sequential"));
}

}  // namespace
}  // namespace fgdm
