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

#include "fgdm/denoiser/text.h"

#include <stdexcept>
#include <string>

#include "fgdm/numerics/ops.h"

namespace fgdm {

TextEncoder::TextEncoder(int vocab_size, int dim, int max_tokens, uint64_t seed)
    : vocab_size_(vocab_size), dim_(dim), max_tokens_(max_tokens) {
  if (vocab_size < 2 || dim < 1 || max_tokens < 1) {
    throw std::invalid_argument("text encoder sizes must be positive");
  }
  RngStream rng(seed, "text");
  params_.Add("table", rng.NormalTensor({vocab_size, dim}));
  params_.Add("position", Scale(rng.NormalTensor({max_tokens, dim}), 0.1f));
}

PromptBatch TextEncoder::Encode(Tape* tape,
                                const std::vector<std::vector<int>>& ids) const {
  if (ids.empty()) throw std::invalid_argument("empty prompt batch");
  const int64_t n = static_cast<int64_t>(ids.size());
  const int L = max_tokens_;
  std::vector<int> flat(n * L, kPadToken);
  Tensor mask({n, L});
  for (int64_t b = 0; b < n; ++b) {
    const std::vector<int>& p = ids[b].empty() ? std::vector<int>{kNullToken} : ids[b];
    if (static_cast<int>(p.size()) > L) {
      throw std::invalid_argument("prompt has " + std::to_string(p.size()) +
                                  " tokens, limit is " + std::to_string(L));
    }
    for (size_t i = 0; i < p.size(); ++i) {
      if (p[i] <= kPadToken || p[i] >= vocab_size_) {
        throw std::out_of_range("token id " + std::to_string(p[i]) + " out of range");
      }
      flat[b * L + i] = p[i];
      mask.mutable_data()[b * L + i] = 1.0f;
    }
  }
  Var emb = ops::Reshape(ops::Embedding(Bind(tape, params_.Get("table")), flat),
                         {n, L, dim_});
  emb = ops::Add(emb, Bind(tape, params_.Get("position")));
  return {emb, mask};
}

}  // namespace fgdm
