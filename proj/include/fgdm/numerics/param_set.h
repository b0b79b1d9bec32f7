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

#ifndef FGDM_NUMERICS_PARAM_SET_H_
#define FGDM_NUMERICS_PARAM_SET_H_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fgdm/numerics/autograd.h"
#include "fgdm/numerics/checkpoint.h"

namespace fgdm {

// Owns named parameters with stable addresses, ordered by name.
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(const ParamSet&) = delete;
  ParamSet& operator=(const ParamSet&) = delete;
  ParamSet(ParamSet&&) = default;
  ParamSet& operator=(ParamSet&&) = default;

  // Throws if the name exists.
  Parameter& Add(const std::string& name, Tensor value);
  Parameter& Get(const std::string& name);
  const Parameter& Get(const std::string& name) const;
  bool Has(const std::string& name) const { return params_.count(name) > 0; }

  std::vector<Parameter*> List(bool trainable_only = false);
  std::vector<const Parameter*> List() const;
  int64_t NumElements() const;
  size_t size() const { return params_.size(); }

  void SetTrainable(bool trainable);
  // Deep copy of values and flags.
  void CopyFrom(const ParamSet& other);

  // Entries are stored as prefix + name.
  void ExportTo(Checkpoint& ckpt, const std::string& prefix) const;
  // Every parameter must be present with a matching shape; throws
  // FormatError otherwise.
  void ImportFrom(const Checkpoint& ckpt, const std::string& prefix);

  uint64_t Checksum() const;

 private:
  std::map<std::string, std::unique_ptr<Parameter>> params_;
};

}  // namespace fgdm

#endif  // FGDM_NUMERICS_PARAM_SET_H_
