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

#ifndef FGDM_TOYWORLD_TOYWORLD_H_
#define FGDM_TOYWORLD_TOYWORLD_H_

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgdm/codec/codec.h"
#include "fgdm/numerics/rng.h"
#include "fgdm/numerics/tensor.h"

namespace fgdm {

enum class ShapeKind { kCircle, kSquare, kTriangle, kDiamond, kCross, kRing };

const std::vector<std::string>& AllShapeNames();

struct WorldConfig {
  int image_size = 32;
  int cond_size = 16;
  int num_classes = 4;  // 3..6, taken from the front of AllShapeNames()
  int max_objects = 3;
  // Every object must cover this many pixels at cond_size.
  int min_visible_pixels = 4;
  double min_radius = 0.12;  // fractions of the canvas
  double max_radius = 0.26;

  void Validate() const;
  nlohmann::json ToJson() const;
  static WorldConfig FromJson(const nlohmann::json& j);
};

// Geometry is in canvas-relative units so one scene renders at any size.
struct SceneObject {
  int class_id = 1;  // palette id, 1-based
  double cx = 0.5;
  double cy = 0.5;
  double radius = 0.2;
  int depth_rank = 0;  // 0 is nearest
  bool flip = false;
  double shade = 1.0;
};

struct SceneSpec {
  std::vector<SceneObject> objects;
};

// Token ids: 0 pad, 1 null, 2.. count words, then class words.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kNull = 1;

  explicit Vocabulary(int num_classes);

  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  int max_count() const { return 3; }
  int CountToken(int count) const;
  int ClassToken(int class_id) const;
  // Palette class id for a class-word token, or -1.
  int ClassOfToken(int token) const;
  // Unknown words are skipped.
  std::vector<int> Encode(const std::string& text) const;
  std::string Decode(const std::vector<int>& tokens) const;

 private:
  int num_classes_;
  std::vector<std::string> words_;
};

struct Sample {
  Tensor image;           // [S,S,3] in [0,1]
  LabelMap segmentation;  // [S,S]
  Tensor depth;           // [S,S] in [0,1]
};

Palette WorldPalette(const WorldConfig& config);

// Deterministic z-buffer rasterization at size x size. Lower depth rank
// wins overlaps.
Sample Render(const SceneSpec& scene, int size, const WorldConfig& config);

// "<count> <class>" pairs, ordered by class id, for every object.
std::string ScenePrompt(const SceneSpec& scene, const WorldConfig& config);

// 1..max_objects objects with uniform class, position and size, resampled
// until each object shows at least min_visible_pixels at cond_size.
SceneSpec SampleScene(RngStream& rng, const WorldConfig& config);

std::set<int> ExtractObjectClasses(const std::vector<int>& tokens,
                                   const Vocabulary& vocab);
std::set<int> ExtractObjectClasses(const std::string& prompt,
                                   const Vocabulary& vocab);

struct DatasetRecord {
  Tensor image;          // [S,S,3] at image_size
  LabelMap segmentation;  // cond_size
  Tensor depth;          // [s,s] at cond_size
  std::string prompt;
};

struct Dataset {
  WorldConfig config;
  uint64_t seed = 0;
  std::vector<DatasetRecord> records;
  std::vector<int> train;
  std::vector<int> val;

  Palette palette() const { return WorldPalette(config); }
  Vocabulary vocabulary() const { return Vocabulary(config.num_classes); }
};

Dataset GenerateDataset(int n, int val_count, uint64_t seed,
                        const WorldConfig& config);

// <dir>/manifest.json + <dir>/data.bin. Throws IoError.
void SaveDataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset LoadDataset(const std::filesystem::path& dir);

}  // namespace fgdm

#endif  // FGDM_TOYWORLD_TOYWORLD_H_
