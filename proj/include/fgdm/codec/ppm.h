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

#ifndef FGDM_CODEC_PPM_H_
#define FGDM_CODEC_PPM_H_

#include <string>

#include "fgdm/numerics/tensor.h"

namespace fgdm {

// Binary P6 with maxval 255. Images are [H,W,3] in [0,1].
std::string EncodePpm(const Tensor& rgb);
// Throws FormatError on malformed input.
Tensor DecodePpm(const std::string& bytes);

std::string Base64Encode(const std::string& bytes);
// Throws FormatError on characters outside the standard alphabet.
std::string Base64Decode(const std::string& text);

}  // namespace fgdm

#endif  // FGDM_CODEC_PPM_H_
