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

#include "fgdm/graph/graph.h"

#include <set>
#include <stdexcept>

#include "fgdm/numerics/json_keys.h"

namespace fgdm {
namespace {

[[noreturn]] void Fail(const std::string& message) {
  throw std::invalid_argument("factor graph: " + message);
}

nlohmann::json ScheduleToJson(const ScheduleConfig& s) {
  return {{"steps", s.steps}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

ScheduleConfig ScheduleFromJson(const nlohmann::json& j) {
  RequireKnownKeys(j, {"steps", "beta_start", "beta_end"}, "schedule");
  ScheduleConfig s;
  s.steps = j.value("steps", s.steps);
  s.beta_start = j.value("beta_start", s.beta_start);
  s.beta_end = j.value("beta_end", s.beta_end);
  return s;
}

}  // namespace

std::string ToString(VariableKind kind) {
  switch (kind) {
    case VariableKind::kSegmentation: return "segmentation";
    case VariableKind::kDepth: return "depth";
    case VariableKind::kImage: return "image";
  }
  return "?";
}

std::string ToString(ConditioningMode mode) {
  return mode == ConditioningMode::kAdapter ? "adapter" : "concat";
}

VariableKind ParseVariableKind(const std::string& s) {
  if (s == "segmentation") return VariableKind::kSegmentation;
  if (s == "depth") return VariableKind::kDepth;
  if (s == "image") return VariableKind::kImage;
  Fail("unknown variable kind \"" + s + "\"");
}

ConditioningMode ParseConditioningMode(const std::string& s) {
  if (s == "adapter") return ConditioningMode::kAdapter;
  if (s == "concat") return ConditioningMode::kConcat;
  Fail("unknown conditioning mode \"" + s + "\"");
}

nlohmann::json FactorSpec::ToJson() const {
  nlohmann::json j = {{"name", name},
                      {"output", output},
                      {"kind", ToString(kind)},
                      {"parents", parents},
                      {"height", height},
                      {"width", width},
                      {"mode", ToString(mode)}};
  if (mode == ConditioningMode::kConcat) j["denoiser"] = denoiser.ToJson();
  return j;
}

FactorSpec FactorSpec::FromJson(const nlohmann::json& j) {
  RequireKnownKeys(j, {"name", "output", "kind", "parents", "height", "width",
                       "mode", "denoiser"},
                   "factor");
  FactorSpec f;
  f.name = j.at("name").get<std::string>();
  f.output = j.at("output").get<std::string>();
  f.kind = ParseVariableKind(j.at("kind").get<std::string>());
  f.parents = j.value("parents", f.parents);
  f.height = j.at("height").get<int>();
  f.width = j.at("width").get<int>();
  f.mode = ParseConditioningMode(j.value("mode", std::string("adapter")));
  if (j.contains("denoiser")) f.denoiser = DenoiserConfig::FromJson(j.at("denoiser"));
  return f;
}

int GraphSpec::IndexOf(const std::string& variable) const {
  for (int i = 0; i < num_factors(); ++i) {
    if (factors[i].output == variable) return i;
  }
  return -1;
}

const FactorSpec& GraphSpec::factor(const std::string& variable) const {
  const int i = IndexOf(variable);
  if (i < 0) Fail("unknown variable \"" + variable + "\"");
  return factors[i];
}

std::vector<std::string> GraphSpec::Variables() const {
  std::vector<std::string> out;
  for (const FactorSpec& f : factors) out.push_back(f.output);
  return out;
}

std::vector<int> GraphSpec::ParentIndices(int i) const {
  std::vector<int> out;
  for (const std::string& p : factors.at(i).parents) out.push_back(IndexOf(p));
  return out;
}

int GraphSpec::ConditionChannels(int i) const {
  const FactorSpec& f = factors.at(i);
  const int parents = kLatentChannels * static_cast<int>(f.parents.size());
  if (f.mode == ConditioningMode::kConcat) return kLatentChannels + parents;
  return f.parents.empty() ? kLatentChannels : parents;
}

void GraphSpec::Validate() const {
  if (factors.empty()) Fail("no factors");
  if (vocab_size < 3) Fail("vocab_size too small");
  if (schedule.steps < 1) Fail("schedule needs at least one step");
  backbone.Validate();
  if (backbone.in_channels != kLatentChannels ||
      backbone.out_channels != kLatentChannels) {
    Fail("backbone must map 3 channels to 3 channels");
  }
  std::set<std::string> names;
  std::set<std::string> produced;
  for (int i = 0; i < num_factors(); ++i) {
    const FactorSpec& f = factors[i];
    if (f.name.empty() || !names.insert(f.name).second) {
      Fail("factor names must be unique and non-empty");
    }
    if (f.output.empty() || produced.count(f.output)) {
      Fail("variable \"" + f.output + "\" is produced twice");
    }
    const bool is_image = f.output == kImageVariable;
    if (is_image != (f.kind == VariableKind::kImage)) {
      Fail("only the \"image\" variable may have kind image");
    }
    if (is_image && i != num_factors() - 1) Fail("the image factor must be last");
    if (!is_image && i == num_factors() - 1) Fail("the last factor must produce the image");
    std::set<std::string> seen;
    for (const std::string& p : f.parents) {
      if (!produced.count(p)) {
        Fail("factor \"" + f.name + "\" reads \"" + p +
             "\" before it is produced");
      }
      if (!seen.insert(p).second) Fail("duplicate parent \"" + p + "\"");
    }
    const int multiple = f.mode == ConditioningMode::kConcat
                             ? f.denoiser.resolution_multiple()
                             : backbone.resolution_multiple();
    if (f.height < 1 || f.width < 1 || f.height % multiple || f.width % multiple) {
      Fail("factor \"" + f.name + "\" resolution must be a positive multiple of " +
           std::to_string(multiple));
    }
    if (f.mode == ConditioningMode::kConcat) {
      f.denoiser.Validate();
      if (f.denoiser.in_channels != ConditionChannels(i) ||
          f.denoiser.out_channels != kLatentChannels) {
        Fail("concat factor \"" + f.name + "\" needs in_channels " +
             std::to_string(ConditionChannels(i)) + " and out_channels 3");
      }
      if (f.denoiser.prompt_dim != backbone.prompt_dim ||
          f.denoiser.max_tokens != backbone.max_tokens) {
        Fail("concat factor \"" + f.name + "\" must share the prompt encoding");
      }
    }
    produced.insert(f.output);
  }
}

nlohmann::json GraphSpec::ToJson() const {
  nlohmann::json fs = nlohmann::json::array();
  for (const FactorSpec& f : factors) fs.push_back(f.ToJson());
  return {{"factors", fs},
          {"schedule", ScheduleToJson(schedule)},
          {"backbone", backbone.ToJson()},
          {"vocab_size", vocab_size}};
}

GraphSpec GraphSpec::FromJson(const nlohmann::json& j) {
  RequireKnownKeys(j, {"factors", "schedule", "backbone", "vocab_size"}, "graph");
  GraphSpec g;
  for (const auto& f : j.at("factors")) g.factors.push_back(FactorSpec::FromJson(f));
  if (j.contains("schedule")) g.schedule = ScheduleFromJson(j.at("schedule"));
  g.backbone = DenoiserConfig::FromJson(j.at("backbone"));
  g.vocab_size = j.value("vocab_size", g.vocab_size);
  g.Validate();
  return g;
}

GraphSpec MakeSegImageGraph(const DenoiserConfig& backbone, int cond_size,
                            int image_size, int vocab_size,
                            ConditioningMode seg_mode) {
  GraphSpec g;
  g.backbone = backbone;
  g.vocab_size = vocab_size;
  FactorSpec seg;
  seg.name = "seg";
  seg.output = "seg";
  seg.kind = VariableKind::kSegmentation;
  seg.height = seg.width = cond_size;
  seg.mode = seg_mode;
  seg.denoiser = backbone;
  FactorSpec image;
  image.name = "image";
  image.output = kImageVariable;
  image.kind = VariableKind::kImage;
  image.parents = {"seg"};
  image.height = image.width = image_size;
  image.denoiser = backbone;
  g.factors = {seg, image};
  g.Validate();
  return g;
}

}  // namespace fgdm
