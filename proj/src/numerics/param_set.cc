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

#include "fgdm/numerics/param_set.h"

#include <stdexcept>

namespace fgdm {

Parameter& ParamSet::Add(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.emplace(
      name, std::make_unique<Parameter>(Parameter{name, std::move(value), true}));
  if (!inserted) throw std::invalid_argument("duplicate parameter " + name);
  return *it->second;
}

Parameter& ParamSet::Get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter " + name);
  return *it->second;
}

const Parameter& ParamSet::Get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter " + name);
  return *it->second;
}

std::vector<Parameter*> ParamSet::List(bool trainable_only) {
  std::vector<Parameter*> out;
  for (auto& [name, p] : params_) {
    if (!trainable_only || p->trainable) out.push_back(p.get());
  }
  return out;
}

std::vector<const Parameter*> ParamSet::List() const {
  std::vector<const Parameter*> out;
  for (const auto& [name, p] : params_) out.push_back(p.get());
  return out;
}

int64_t ParamSet::NumElements() const {
  int64_t n = 0;
  for (const auto& [name, p] : params_) n += p->value.numel();
  return n;
}

void ParamSet::SetTrainable(bool trainable) {
  for (auto& [name, p] : params_) p->trainable = trainable;
}

void ParamSet::CopyFrom(const ParamSet& other) {
  params_.clear();
  for (const auto& [name, p] : other.params_) {
    auto copy = std::make_unique<Parameter>(*p);
    copy->value = p->value.Clone();
    params_.emplace(name, std::move(copy));
  }
}

void ParamSet::ExportTo(Checkpoint& ckpt, const std::string& prefix) const {
  for (const auto& [name, p] : params_) ckpt.tensors[prefix + name] = p->value;
}

void ParamSet::ImportFrom(const Checkpoint& ckpt, const std::string& prefix) {
  for (auto& [name, p] : params_) {
    const std::string key = prefix + name;
    if (!ckpt.Has(key)) throw FormatError("checkpoint lacks " + key);
    const Tensor& v = ckpt.Get(key);
    if (v.shape() != p->value.shape()) {
      throw FormatError("checkpoint entry " + key + " has shape " +
                        ShapeString(v.shape()) + ", expected " +
                        ShapeString(p->value.shape()));
    }
    p->value = v.Clone();
  }
}

uint64_t ParamSet::Checksum() const {
  const std::vector<const Parameter*> all = List();
  return ParameterChecksum(all);
}

}  // namespace fgdm
