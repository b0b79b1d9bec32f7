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

#include "fgdm/toyworld/toyworld.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fgdm/numerics/checkpoint.h"
#include "fgdm/numerics/json_keys.h"

namespace fgdm {
namespace {

static_assert(std::endian::native == std::endian::little,
              "dataset blobs are written in host order");

constexpr float kBackgroundGray = 0.5f;

// Image colors are unrelated to the palette so that the image factor has
// a real mapping to learn.
constexpr float kClassColors[6][3] = {
    {0.90f, 0.25f, 0.20f}, {0.20f, 0.55f, 0.95f}, {0.25f, 0.80f, 0.30f},
    {0.95f, 0.80f, 0.15f}, {0.70f, 0.30f, 0.85f}, {0.15f, 0.85f, 0.80f}};

const char* const kCountWords[] = {"one", "two", "three"};

bool Inside(ShapeKind kind, double d, double e, bool flip) {
  switch (kind) {
    case ShapeKind::kCircle:
      return d * d + e * e <= 1.0;
    case ShapeKind::kSquare:
      return std::abs(d) <= 0.85 && std::abs(e) <= 0.85;
    case ShapeKind::kTriangle: {
      const double v = flip ? -e : e;
      return v >= -1.0 && v <= 0.75 && std::abs(d) <= (v + 1.0) / 1.75;
    }
    case ShapeKind::kDiamond:
      return std::abs(d) + std::abs(e) <= 1.1;
    case ShapeKind::kCross:
      return (std::abs(d) <= 0.35 && std::abs(e) <= 1.0) ||
             (std::abs(e) <= 0.35 && std::abs(d) <= 1.0);
    case ShapeKind::kRing: {
      const double r2 = d * d + e * e;
      return r2 <= 1.0 && r2 >= 0.3;
    }
  }
  return false;
}

// Index of the object owning each pixel, -1 for background.
std::vector<int> Rasterize(const SceneSpec& scene, int size) {
  std::vector<int> owner(static_cast<size_t>(size) * size, -1);
  std::vector<int> order(scene.objects.size());
  std::iota(order.begin(), order.end(), 0);
  // Paint far to near so nearer objects overwrite.
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return scene.objects[a].depth_rank > scene.objects[b].depth_rank;
  });
  for (int idx : order) {
    const SceneObject& o = scene.objects[idx];
    const auto kind = static_cast<ShapeKind>(o.class_id - 1);
    for (int y = 0; y < size; ++y) {
      const double v = (y + 0.5) / size;
      for (int x = 0; x < size; ++x) {
        const double u = (x + 0.5) / size;
        if (Inside(kind, (u - o.cx) / o.radius, (v - o.cy) / o.radius, o.flip)) {
          owner[y * size + x] = idx;
        }
      }
    }
  }
  return owner;
}

template <typename T>
void AppendRaw(std::string& out, const T* data, size_t n) {
  out.append(reinterpret_cast<const char*>(data), n * sizeof(T));
}

}  // namespace

const std::vector<std::string>& AllShapeNames() {
  static const std::vector<std::string> names = {
      "circle", "square", "triangle", "diamond", "cross", "ring"};
  return names;
}

void WorldConfig::Validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("world config: " + m); };
  if (image_size < 4 || cond_size < 4) fail("sizes must be at least 4");
  if (num_classes < 1 || num_classes > 6) fail("num_classes must be in 1..6");
  if (max_objects < 1 || max_objects > 3) fail("max_objects must be in 1..3");
  if (min_visible_pixels < 1) fail("min_visible_pixels must be positive");
  if (!(min_radius > 0.0 && min_radius <= max_radius && max_radius < 0.5)) {
    fail("radii must satisfy 0 < min <= max < 0.5");
  }
}

nlohmann::json WorldConfig::ToJson() const {
  return {{"image_size", image_size},
          {"cond_size", cond_size},
          {"num_classes", num_classes},
          {"max_objects", max_objects},
          {"min_visible_pixels", min_visible_pixels},
          {"min_radius", min_radius},
          {"max_radius", max_radius}};
}

WorldConfig WorldConfig::FromJson(const nlohmann::json& j) {
  RequireKnownKeys(j, {"image_size", "cond_size", "num_classes", "max_objects",
                       "min_visible_pixels", "min_radius", "max_radius"},
                   "world config");
  WorldConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.cond_size = j.at("cond_size").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.max_objects = j.at("max_objects").get<int>();
  c.min_visible_pixels = j.at("min_visible_pixels").get<int>();
  c.min_radius = j.at("min_radius").get<double>();
  c.max_radius = j.at("max_radius").get<double>();
  c.Validate();
  return c;
}

Vocabulary::Vocabulary(int num_classes) : num_classes_(num_classes) {
  words_ = {"<pad>", "<null>"};
  for (const char* w : kCountWords) words_.push_back(w);
  for (int c = 0; c < num_classes; ++c) words_.push_back(AllShapeNames().at(c));
}

int Vocabulary::CountToken(int count) const {
  if (count < 1 || count > max_count()) throw std::out_of_range("count word");
  return 1 + count;
}

int Vocabulary::ClassToken(int class_id) const {
  if (class_id < 1 || class_id > num_classes_) throw std::out_of_range("class word");
  return 1 + max_count() + class_id;
}

int Vocabulary::ClassOfToken(int token) const {
  const int c = token - 1 - max_count();
  return c >= 1 && c <= num_classes_ ? c : -1;
}

std::vector<int> Vocabulary::Encode(const std::string& text) const {
  std::vector<int> out;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    auto it = std::find(words_.begin() + 2, words_.end(), word);
    if (it != words_.end()) out.push_back(static_cast<int>(it - words_.begin()));
  }
  return out;
}

std::string Vocabulary::Decode(const std::vector<int>& tokens) const {
  std::string out;
  for (int t : tokens) {
    if (t < 0 || t >= size()) throw std::out_of_range("token id");
    if (!out.empty()) out += ' ';
    out += words_[t];
  }
  return out;
}

Palette WorldPalette(const WorldConfig& config) {
  std::vector<std::string> names(AllShapeNames().begin(),
                                 AllShapeNames().begin() + config.num_classes);
  return Palette::Generate(names);
}

Sample Render(const SceneSpec& scene, int size, const WorldConfig& config) {
  const std::vector<int> owner = Rasterize(scene, size);
  int max_rank = 0;
  for (const auto& o : scene.objects) max_rank = std::max(max_rank, o.depth_rank);
  Sample s;
  s.image = Tensor({size, size, 3}, kBackgroundGray);
  s.segmentation = LabelMap(size, size, 0);
  s.depth = Tensor({size, size});
  auto img = s.image.mutable_data();
  auto dep = s.depth.mutable_data();
  for (size_t p = 0; p < owner.size(); ++p) {
    if (owner[p] < 0) continue;
    const SceneObject& o = scene.objects[owner[p]];
    if (o.class_id < 1 || o.class_id > config.num_classes) {
      throw std::invalid_argument("scene object class out of range");
    }
    s.segmentation.ids[p] = o.class_id;
    dep[p] = static_cast<float>(1.0 - double(o.depth_rank) / (max_rank + 1));
    for (int c = 0; c < 3; ++c) {
      img[p * 3 + c] = static_cast<float>(kClassColors[o.class_id - 1][c] * o.shade);
    }
  }
  return s;
}

std::string ScenePrompt(const SceneSpec& scene, const WorldConfig& config) {
  std::map<int, int> counts;
  for (const auto& o : scene.objects) ++counts[o.class_id];
  std::string out;
  for (const auto& [cls, n] : counts) {
    if (!out.empty()) out += ' ';
    out += kCountWords[std::min(n, 3) - 1];
    out += ' ';
    out += AllShapeNames().at(cls - 1);
  }
  (void)config;
  return out;
}

SceneSpec SampleScene(RngStream& rng, const WorldConfig& config) {
  config.Validate();
  for (int attempt = 0; attempt < 10000; ++attempt) {
    SceneSpec scene;
    const int n = static_cast<int>(rng.UniformInt(1, config.max_objects));
    std::vector<int> ranks(n);
    std::iota(ranks.begin(), ranks.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(ranks[i], ranks[rng.UniformInt(0, i)]);
    for (int i = 0; i < n; ++i) {
      SceneObject o;
      o.class_id = static_cast<int>(rng.UniformInt(1, config.num_classes));
      o.radius = config.min_radius + rng.Uniform() * (config.max_radius - config.min_radius);
      o.cx = o.radius + rng.Uniform() * (1.0 - 2.0 * o.radius);
      o.cy = o.radius + rng.Uniform() * (1.0 - 2.0 * o.radius);
      o.depth_rank = ranks[i];
      o.flip = rng.Bernoulli(0.5);
      o.shade = 0.7 + 0.3 * rng.Uniform();
      scene.objects.push_back(o);
    }
    const std::vector<int> owner = Rasterize(scene, config.cond_size);
    std::vector<int> visible(n, 0);
    for (int o : owner) {
      if (o >= 0) ++visible[o];
    }
    if (*std::min_element(visible.begin(), visible.end()) >= config.min_visible_pixels) {
      return scene;
    }
  }
  throw std::runtime_error("could not place visible objects; check world config");
}

std::set<int> ExtractObjectClasses(const std::vector<int>& tokens,
                                   const Vocabulary& vocab) {
  std::set<int> out;
  for (int t : tokens) {
    const int c = vocab.ClassOfToken(t);
    if (c > 0) out.insert(c);
  }
  return out;
}

std::set<int> ExtractObjectClasses(const std::string& prompt,
                                   const Vocabulary& vocab) {
  return ExtractObjectClasses(vocab.Encode(prompt), vocab);
}

Dataset GenerateDataset(int n, int val_count, uint64_t seed,
                        const WorldConfig& config) {
  if (n < 1) throw std::invalid_argument("dataset needs at least one scene");
  if (val_count < 0 || val_count >= n) {
    throw std::invalid_argument("validation count must be in [0, n)");
  }
  config.Validate();
  Dataset ds;
  ds.config = config;
  ds.seed = seed;
  ds.records.reserve(n);
  for (int i = 0; i < n; ++i) {
    RngStream rng(seed, "scene", i);
    const SceneSpec scene = SampleScene(rng, config);
    Sample full = Render(scene, config.image_size, config);
    Sample cond = Render(scene, config.cond_size, config);
    // Quantize to what the blob stores so that save/load is lossless.
    for (float& v : full.image.mutable_data()) v = QuantizeUnit(v) / 255.0f;
    ds.records.push_back({full.image, cond.segmentation, cond.depth,
                          ScenePrompt(scene, config)});
    (i < n - val_count ? ds.train : ds.val).push_back(i);
  }
  return ds;
}

void SaveDataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const int n = static_cast<int>(ds.records.size());
  const int S = ds.config.image_size;
  const int s = ds.config.cond_size;
  std::string blob;
  nlohmann::json prompts = nlohmann::json::array();
  std::vector<uint8_t> img;
  std::vector<uint16_t> seg;
  for (const auto& r : ds.records) {
    for (float v : r.image.data()) img.push_back(QuantizeUnit(v));
    for (int id : r.segmentation.ids) seg.push_back(static_cast<uint16_t>(id));
    prompts.push_back(r.prompt);
  }
  nlohmann::json blobs;
  auto add = [&](const char* name, const char* dtype, std::vector<int64_t> shape,
                 const std::string& bytes) {
    blobs[name] = {{"dtype", dtype}, {"shape", shape},
                   {"offset", blob.size()}, {"bytes", bytes.size()}};
    blob += bytes;
  };
  std::string bytes;
  AppendRaw(bytes, img.data(), img.size());
  add("image", "u8", {n, S, S, 3}, bytes);
  bytes.clear();
  AppendRaw(bytes, seg.data(), seg.size());
  add("segmentation", "u16", {n, s, s}, bytes);
  bytes.clear();
  for (const auto& r : ds.records) AppendRaw(bytes, r.depth.raw(), r.depth.numel());
  add("depth", "f32", {n, s, s}, bytes);
  nlohmann::json manifest = {
      {"format", "fgdm-toyworld"},
      {"version", 1},
      {"count", n},
      {"seed", ds.seed},
      {"config", ds.config.ToJson()},
      {"palette", ds.palette().ToJson()},
      {"vocabulary", ds.vocabulary().words()},
      {"split", {{"train", ds.train}, {"val", ds.val}}},
      {"prompts", prompts},
      {"blobs", blobs},
      {"data_file", "data.bin"}};
  WriteFileBytes(dir / "data.bin", blob);
  WriteFileBytes(dir / "manifest.json", manifest.dump(1) + "\n");
}

Dataset LoadDataset(const std::filesystem::path& dir) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(ReadFileBytes(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  const std::string blob = ReadFileBytes(dir / m.value("data_file", "data.bin"));
  Dataset ds;
  try {
    if (m.at("format") != "fgdm-toyworld") throw FormatError("not a toyworld dataset");
    ds.config = WorldConfig::FromJson(m.at("config"));
    ds.seed = m.at("seed").get<uint64_t>();
    ds.train = m.at("split").at("train").get<std::vector<int>>();
    ds.val = m.at("split").at("val").get<std::vector<int>>();
    const int n = m.at("count").get<int>();
    const int S = ds.config.image_size;
    const int s = ds.config.cond_size;
    auto view = [&](const char* name, size_t elem, size_t per) {
      const auto& b = m.at("blobs").at(name);
      const size_t off = b.at("offset").get<size_t>();
      const size_t len = b.at("bytes").get<size_t>();
      if (len != elem * per * n || off + len > blob.size()) {
        throw FormatError(std::string("dataset blob ") + name + " has wrong size");
      }
      return blob.data() + off;
    };
    const char* img = view("image", 1, size_t(S) * S * 3);
    const char* seg = view("segmentation", 2, size_t(s) * s);
    const char* dep = view("depth", 4, size_t(s) * s);
    const auto prompts = m.at("prompts").get<std::vector<std::string>>();
    if (static_cast<int>(prompts.size()) != n) throw FormatError("prompt count mismatch");
    for (int i = 0; i < n; ++i) {
      DatasetRecord r;
      r.image = Tensor({S, S, 3});
      auto o = r.image.mutable_data();
      for (size_t k = 0; k < o.size(); ++k) {
        o[k] = static_cast<uint8_t>(img[i * o.size() + k]) / 255.0f;
      }
      r.segmentation = LabelMap(s, s);
      for (int k = 0; k < s * s; ++k) {
        uint16_t v;
        std::memcpy(&v, seg + (size_t(i) * s * s + k) * 2, 2);
        r.segmentation.ids[k] = v;
      }
      r.depth = Tensor({s, s});
      std::memcpy(r.depth.mutable_data().data(), dep + size_t(i) * s * s * 4, size_t(s) * s * 4);
      r.prompt = prompts[i];
      ds.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  return ds;
}

}  // namespace fgdm
