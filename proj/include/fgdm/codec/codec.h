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

#ifndef FGDM_CODEC_CODEC_H_
#define FGDM_CODEC_CODEC_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgdm/numerics/tensor.h"

namespace fgdm {

using Rgb8 = std::array<uint8_t, 3>;

struct PaletteEntry {
  int id = 0;
  std::string name;
  Rgb8 rgb{};
};

// Class id -> prototype color. Ids are dense, 0 is the background.
class Palette {
 public:
  static constexpr int kDefaultMargin = 28;

  Palette() = default;
  // Validates uniqueness and the spacing rule: pairwise per-channel L-inf
  // distance >= 2 * margin + 2.
  Palette(std::vector<PaletteEntry> entries, int margin = kDefaultMargin);

  // Background "background" in black, then one greedily max-min separated
  // lattice color per class name.
  static Palette Generate(const std::vector<std::string>& class_names,
                          int margin = kDefaultMargin);

  const std::vector<PaletteEntry>& entries() const { return entries_; }
  int size() const { return static_cast<int>(entries_.size()); }
  int background_id() const { return 0; }
  int margin() const { return margin_; }
  bool Contains(int id) const { return id >= 0 && id < size(); }
  const Rgb8& color(int id) const;
  int MinSpacing() const;

  nlohmann::json ToJson() const;
  static Palette FromJson(const nlohmann::json& j);

 private:
  std::vector<PaletteEntry> entries_;
  int margin_ = kDefaultMargin;
};

struct LabelMap {
  static constexpr int kUnknown = -1;

  LabelMap() = default;
  LabelMap(int64_t h, int64_t w, int fill = 0)
      : height(h), width(w), ids(static_cast<size_t>(h * w), fill) {}

  int at(int64_t y, int64_t x) const { return ids[y * width + x]; }
  int& at(int64_t y, int64_t x) { return ids[y * width + x]; }
  int64_t Count(int id) const;
  bool operator==(const LabelMap& o) const = default;

  int64_t height = 0;
  int64_t width = 0;
  std::vector<int> ids;
};

enum class DecodeMetric {
  kChebyshev,  // per-channel |d| <= margin
  kEuclidean,  // ||d||_2 <= margin
};

// Copy of labels with kUnknown replaced by fill.
LabelMap ReplaceUnknown(LabelMap labels, int fill);

// [H,W,3] in [0,1].
Tensor EncodeMap(const LabelMap& labels, const Palette& palette);

// Pixels are quantized with round(clamp(v,0,1) * 255). Among prototypes
// within the margin the nearest in L2 wins, ties to the lower id; pixels
// with no candidate become kUnknown.
LabelMap DecodeMap(const Tensor& rgb, const Palette& palette,
                   int margin = Palette::kDefaultMargin,
                   DecodeMetric metric = DecodeMetric::kChebyshev);

struct ReconstructionError {
  double normalized_mse = 0.0;  // over [0,1] values
  double pixel_error = 0.0;     // sqrt(mse) * 255
};

ReconstructionError ComputeReconstructionError(const Tensor& original,
                                               const Tensor& reconstructed);

uint8_t QuantizeUnit(float v);

}  // namespace fgdm

#endif  // FGDM_CODEC_CODEC_H_
