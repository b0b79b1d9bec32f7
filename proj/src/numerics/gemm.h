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

#ifndef FGDM_SRC_NUMERICS_GEMM_H_
#define FGDM_SRC_NUMERICS_GEMM_H_

#include <cstdint>

#include "fgdm/numerics/tensor.h"

namespace fgdm::internal {

// C (+)= op(A) * op(B), all row-major. op(A) is MxK, op(B) is KxN.
// A is stored KxM when transpose_a, B is stored NxK when transpose_b.
void Gemm(bool transpose_a, bool transpose_b, int64_t m, int64_t n, int64_t k,
          const Real* a, const Real* b, Real* c, bool accumulate);

}  // namespace fgdm::internal

#endif  // FGDM_SRC_NUMERICS_GEMM_H_
