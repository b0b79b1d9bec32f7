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

#ifndef FGDM_DENOISER_TEXT_H_
#define FGDM_DENOISER_TEXT_H_

#include <vector>

#include "fgdm/numerics/autograd.h"
#include "fgdm/numerics/param_set.h"
#include "fgdm/numerics/rng.h"

namespace fgdm {

// Encoded prompts for a batch: tokens [N, L, D] and mask [N, L] with 1 for
// real tokens and 0 for padding.
struct PromptBatch {
  Var tokens;
  Tensor mask;

  int64_t batch() const { return tokens.dim(0); }
};

// Learned token table plus positional embedding; stands in for a
// pretrained text encoder.
class TextEncoder {
 public:
  static constexpr int kPadToken = 0;
  static constexpr int kNullToken = 1;

  TextEncoder(int vocab_size, int dim, int max_tokens, uint64_t seed);

  // Empty token lists encode as the null prompt. Throws when a list is
  // longer than max_tokens or holds an out-of-range id.
  PromptBatch Encode(Tape* tape, const std::vector<std::vector<int>>& ids) const;
  static std::vector<int> NullPrompt() { return {kNullToken}; }

  int vocab_size() const { return vocab_size_; }
  int dim() const { return dim_; }
  int max_tokens() const { return max_tokens_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  int vocab_size_;
  int dim_;
  int max_tokens_;
  ParamSet params_;
};

}  // namespace fgdm

#endif  // FGDM_DENOISER_TEXT_H_
