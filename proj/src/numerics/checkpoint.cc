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

#include "fgdm/numerics/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fgdm {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'F', 'G', 'D', 'M'};

void AppendU64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint64_t ReadU64(const std::string& in, size_t pos) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string Checkpoint::Serialize() const {
  nlohmann::json entries = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const uint64_t bytes = static_cast<uint64_t>(t.numel()) * sizeof(float);
    entries.push_back({{"name", name},
                       {"dtype", "f32"},
                       {"shape", t.shape()},
                       {"offset", offset},
                       {"bytes", bytes}});
    offset += bytes;
  }
  const nlohmann::json header = {{"entries", entries}, {"meta", meta}};
  const std::string text = header.dump();
  std::string out;
  out.reserve(13 + text.size() + offset);
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  AppendU64(out, text.size());
  out += text;
  for (const auto& [name, t] : tensors) {
    for (Real v : t.data()) {
      const float f = static_cast<float>(v);
      out.append(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  }
  return out;
}

Checkpoint Checkpoint::Deserialize(const std::string& bytes) {
  if (bytes.size() < 13 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an FGDM container (bad magic)");
  }
  if (static_cast<uint8_t>(bytes[4]) != kVersion) {
    throw FormatError("unsupported FGDM container version " +
                      std::to_string(static_cast<int>(bytes[4])));
  }
  const uint64_t header_len = ReadU64(bytes, 5);
  if (13 + header_len > bytes.size()) throw FormatError("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(13, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad header JSON: ") + e.what());
  }
  const size_t base = 13 + header_len;
  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& e : header.at("entries")) {
    if (e.at("dtype") != "f32") throw FormatError("unsupported dtype");
    Shape shape = e.at("shape").get<Shape>();
    const uint64_t offset = e.at("offset").get<uint64_t>();
    const int64_t n = NumElements(shape);
    const uint64_t nbytes = static_cast<uint64_t>(n) * sizeof(float);
    if (e.contains("bytes") && e.at("bytes").get<uint64_t>() != nbytes) {
      throw FormatError("entry size disagrees with its shape");
    }
    if (base + offset + nbytes > bytes.size()) throw FormatError("truncated blob");
    std::vector<float> raw(n);
    std::memcpy(raw.data(), bytes.data() + base + offset, nbytes);
    std::vector<Real> values(raw.begin(), raw.end());
    ck.tensors.emplace(e.at("name").get<std::string>(),
                       Tensor(std::move(shape), std::move(values)));
  }
  return ck;
}

void Checkpoint::Save(const std::filesystem::path& path) const {
  WriteFileBytes(path, Serialize());
}

Checkpoint Checkpoint::Load(const std::filesystem::path& path) {
  return Deserialize(ReadFileBytes(path));
}

const Tensor& Checkpoint::Get(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("checkpoint has no entry " + name);
  return it->second;
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileBytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

}  // namespace fgdm
