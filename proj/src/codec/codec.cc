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

#include "fgdm/codec/codec.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace fgdm {
namespace {

int ChebyshevDistance(const Rgb8& a, const Rgb8& b) {
  int d = 0;
  for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(int(a[c]) - int(b[c])));
  return d;
}

int SquaredDistance(const Rgb8& a, const Rgb8& b) {
  int d = 0;
  for (int c = 0; c < 3; ++c) {
    const int x = int(a[c]) - int(b[c]);
    d += x * x;
  }
  return d;
}

}  // namespace

uint8_t QuantizeUnit(float v) {
  const float c = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
  return static_cast<uint8_t>(std::lround(c * 255.0f));
}

Palette::Palette(std::vector<PaletteEntry> entries, int margin)
    : entries_(std::move(entries)), margin_(margin) {
  if (entries_.empty()) throw std::invalid_argument("palette is empty");
  if (margin_ < 0) throw std::invalid_argument("palette margin is negative");
  std::set<std::string> names;
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].id != static_cast<int>(i)) {
      throw std::invalid_argument("palette ids must be 0..n-1 in order");
    }
    if (!names.insert(entries_[i].name).second) {
      throw std::invalid_argument("duplicate palette name " + entries_[i].name);
    }
  }
  if (size() > 1 && MinSpacing() < 2 * margin_ + 2) {
    throw std::invalid_argument("palette colors closer than 2*margin+2");
  }
}

Palette Palette::Generate(const std::vector<std::string>& class_names,
                          int margin) {
  // Candidate lattice, ordered so that ties prefer saturated primaries.
  std::vector<Rgb8> lattice;
  const int levels[] = {255, 204, 153, 102, 51, 0};
  for (int r : levels) {
    for (int g : levels) {
      for (int b : levels) {
        lattice.push_back({uint8_t(r), uint8_t(g), uint8_t(b)});
      }
    }
  }
  auto nonzero = [](const Rgb8& c) {
    return (c[0] > 0) + (c[1] > 0) + (c[2] > 0);
  };
  std::stable_sort(lattice.begin(), lattice.end(),
                   [&](const Rgb8& a, const Rgb8& b) {
                     return nonzero(a) < nonzero(b);
                   });
  std::vector<PaletteEntry> entries{{0, "background", {0, 0, 0}}};
  for (const std::string& name : class_names) {
    int best = -1, best_d = -1;
    for (size_t i = 0; i < lattice.size(); ++i) {
      int d = std::numeric_limits<int>::max();
      for (const auto& e : entries) d = std::min(d, ChebyshevDistance(e.rgb, lattice[i]));
      if (d > best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    entries.push_back({static_cast<int>(entries.size()), name, lattice[best]});
  }
  return Palette(std::move(entries), margin);
}

const Rgb8& Palette::color(int id) const {
  if (!Contains(id)) {
    throw std::out_of_range("label " + std::to_string(id) + " not in palette");
  }
  return entries_[id].rgb;
}

int Palette::MinSpacing() const {
  int m = std::numeric_limits<int>::max();
  for (size_t i = 0; i < entries_.size(); ++i) {
    for (size_t j = i + 1; j < entries_.size(); ++j) {
      m = std::min(m, ChebyshevDistance(entries_[i].rgb, entries_[j].rgb));
    }
  }
  return m;
}

nlohmann::json Palette::ToJson() const {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& e : entries_) {
    classes.push_back({{"id", e.id}, {"name", e.name}, {"rgb", e.rgb}});
  }
  return {{"margin", margin_}, {"background_id", 0}, {"classes", classes}};
}

Palette Palette::FromJson(const nlohmann::json& j) {
  std::vector<PaletteEntry> entries;
  for (const auto& c : j.at("classes")) {
    entries.push_back({c.at("id").get<int>(), c.at("name").get<std::string>(),
                       c.at("rgb").get<Rgb8>()});
  }
  return Palette(std::move(entries), j.value("margin", kDefaultMargin));
}

int64_t LabelMap::Count(int id) const {
  return std::count(ids.begin(), ids.end(), id);
}

LabelMap ReplaceUnknown(LabelMap labels, int fill) {
  for (int& id : labels.ids) {
    if (id == LabelMap::kUnknown) id = fill;
  }
  return labels;
}

Tensor EncodeMap(const LabelMap& labels, const Palette& palette) {
  Tensor out({labels.height, labels.width, 3});
  auto o = out.mutable_data();
  for (size_t p = 0; p < labels.ids.size(); ++p) {
    const Rgb8& c = palette.color(labels.ids[p]);
    for (int k = 0; k < 3; ++k) o[p * 3 + k] = c[k] / 255.0f;
  }
  return out;
}

LabelMap DecodeMap(const Tensor& rgb, const Palette& palette, int margin,
                   DecodeMetric metric) {
  if (rgb.rank() != 3 || rgb.dim(2) != 3) {
    throw std::invalid_argument("DecodeMap expects [H,W,3], got " +
                                ShapeString(rgb.shape()));
  }
  LabelMap out(rgb.dim(0), rgb.dim(1), LabelMap::kUnknown);
  auto x = rgb.data();
  const auto& entries = palette.entries();
  for (size_t p = 0; p < out.ids.size(); ++p) {
    const Rgb8 px{QuantizeUnit(x[p * 3]), QuantizeUnit(x[p * 3 + 1]),
                  QuantizeUnit(x[p * 3 + 2])};
    int best = LabelMap::kUnknown;
    int best_d2 = std::numeric_limits<int>::max();
    for (const auto& e : entries) {
      const int d2 = SquaredDistance(px, e.rgb);
      const bool within = metric == DecodeMetric::kChebyshev
                              ? ChebyshevDistance(px, e.rgb) <= margin
                              : d2 <= margin * margin;
      if (within && d2 < best_d2) {
        best_d2 = d2;
        best = e.id;
      }
    }
    out.ids[p] = best;
  }
  return out;
}

ReconstructionError ComputeReconstructionError(const Tensor& original,
                                               const Tensor& reconstructed) {
  RequireSameShape(original, reconstructed, "ComputeReconstructionError");
  double acc = 0.0;
  auto a = original.data();
  auto b = reconstructed.data();
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - b[i];
    acc += d * d;
  }
  ReconstructionError r;
  r.normalized_mse = acc / static_cast<double>(a.size());
  r.pixel_error = std::sqrt(r.normalized_mse) * 255.0;
  return r;
}

}  // namespace fgdm
