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

#ifndef FGDM_GRAPH_GRAPH_H_
#define FGDM_GRAPH_GRAPH_H_

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgdm/denoiser/config.h"
#include "fgdm/diffusion/schedule.h"

namespace fgdm {

// Every variable is a 3-channel latent in [-1, 1]: palette-encoded
// segmentation, depth replicated over channels, or the RGB image.
inline constexpr int kLatentChannels = 3;
inline constexpr char kImageVariable[] = "image";

enum class VariableKind { kSegmentation, kDepth, kImage };
enum class ConditioningMode { kAdapter, kConcat };

std::string ToString(VariableKind kind);
std::string ToString(ConditioningMode mode);
VariableKind ParseVariableKind(const std::string& s);
ConditioningMode ParseConditioningMode(const std::string& s);

struct FactorSpec {
  std::string name;
  std::string output;  // variable id; "image" for the image factor
  VariableKind kind = VariableKind::kSegmentation;
  std::vector<std::string> parents;
  int height = 16;
  int width = 16;
  ConditioningMode mode = ConditioningMode::kAdapter;
  // Concat-mode network. Adapter-mode factors run on the shared backbone
  // and ignore this.
  DenoiserConfig denoiser;

  nlohmann::json ToJson() const;
  static FactorSpec FromJson(const nlohmann::json& j);
};

// Ordered chain [y^K, ..., y^1, x]. Parents precede children and the image
// factor is last.
struct GraphSpec {
  std::vector<FactorSpec> factors;
  ScheduleConfig schedule;
  // Shared frozen backbone (the teacher) used by adapter-mode factors.
  DenoiserConfig backbone;
  int vocab_size = 12;

  // Throws std::invalid_argument.
  void Validate() const;

  int num_factors() const { return static_cast<int>(factors.size()); }
  // Index of the factor producing a variable, or -1.
  int IndexOf(const std::string& variable) const;
  const FactorSpec& factor(const std::string& variable) const;
  std::vector<std::string> Variables() const;
  int image_index() const { return num_factors() - 1; }
  // Parent indices of factor i in declaration order.
  std::vector<int> ParentIndices(int i) const;
  // Input channels of a concat-mode network or an adapter branch.
  int ConditionChannels(int i) const;

  nlohmann::json ToJson() const;
  static GraphSpec FromJson(const nlohmann::json& j);
};

// seg (16x16) -> image (32x32) chain.
GraphSpec MakeSegImageGraph(const DenoiserConfig& backbone, int cond_size,
                            int image_size, int vocab_size,
                            ConditioningMode seg_mode = ConditioningMode::kAdapter);

}  // namespace fgdm

#endif  // FGDM_GRAPH_GRAPH_H_
