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

#ifndef FGDM_NUMERICS_CHECKPOINT_H_
#define FGDM_NUMERICS_CHECKPOINT_H_

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "fgdm/numerics/tensor.h"

namespace fgdm {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Named tensor container. On disk:
//   "FGDM" | version byte | u64 LE header length | JSON header | blobs
// The header lists {name, dtype, shape, offset, bytes} per entry (sorted by
// name) plus a free-form "meta" object; blobs are little-endian float32,
// offsets relative to the end of the header.
struct Checkpoint {
  static constexpr uint8_t kVersion = 1;

  std::map<std::string, Tensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  std::string Serialize() const;
  static Checkpoint Deserialize(const std::string& bytes);

  void Save(const std::filesystem::path& path) const;
  static Checkpoint Load(const std::filesystem::path& path);

  const Tensor& Get(const std::string& name) const;
  bool Has(const std::string& name) const { return tensors.count(name) > 0; }
};

std::string ReadFileBytes(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it into place.
void WriteFileBytes(const std::filesystem::path& path, const std::string& bytes);

}  // namespace fgdm

#endif  // FGDM_NUMERICS_CHECKPOINT_H_
