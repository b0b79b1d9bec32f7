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

#include "gemm.h"

#include <Eigen/Core>

namespace fgdm::internal {
namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

template <typename L, typename R>
void Store(MutMap& c, const L& lhs, const R& rhs, bool accumulate) {
  if (accumulate) {
    c.noalias() += lhs * rhs;
  } else {
    c.noalias() = lhs * rhs;
  }
}

}  // namespace

void Gemm(bool transpose_a, bool transpose_b, int64_t m, int64_t n, int64_t k,
          const Real* a, const Real* b, Real* c, bool accumulate) {
  MutMap cm(c, m, n);
  if (k == 0) {
    if (!accumulate) cm.setZero();
    return;
  }
  if (!transpose_a && !transpose_b) {
    Store(cm, ConstMap(a, m, k), ConstMap(b, k, n), accumulate);
  } else if (!transpose_a && transpose_b) {
    Store(cm, ConstMap(a, m, k), ConstMap(b, n, k).transpose(), accumulate);
  } else if (transpose_a && !transpose_b) {
    Store(cm, ConstMap(a, k, m).transpose(), ConstMap(b, k, n), accumulate);
  } else {
    Store(cm, ConstMap(a, k, m).transpose(), ConstMap(b, n, k).transpose(),
          accumulate);
  }
}

}  // namespace fgdm::internal
