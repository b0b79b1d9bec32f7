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

#ifndef FGDM_NUMERICS_JSON_KEYS_H_
#define FGDM_NUMERICS_JSON_KEYS_H_

#include <initializer_list>
#include <string_view>

#include <nlohmann/json.hpp>

namespace fgdm {

// Throws std::invalid_argument naming the first key of `j` outside
// `allowed`, or when `j` is not an object.
void RequireKnownKeys(const nlohmann::json& j,
                      std::initializer_list<std::string_view> allowed,
                      std::string_view what);

}  // namespace fgdm

#endif  // FGDM_NUMERICS_JSON_KEYS_H_
