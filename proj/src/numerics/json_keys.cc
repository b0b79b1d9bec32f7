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

#include "fgdm/numerics/json_keys.h"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace fgdm {

void RequireKnownKeys(const nlohmann::json& j,
                      std::initializer_list<std::string_view> allowed,
                      std::string_view what) {
  if (!j.is_object()) {
    throw std::invalid_argument(std::string(what) + ": expected an object");
  }
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw std::invalid_argument(std::string(what) + ": unknown key \"" +
                                  item.key() + "\"");
    }
  }
}

}  // namespace fgdm
