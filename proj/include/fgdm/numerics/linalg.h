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

#ifndef FGDM_NUMERICS_LINALG_H_
#define FGDM_NUMERICS_LINALG_H_

#include <Eigen/Core>

#include "fgdm/numerics/tensor.h"

namespace fgdm {

using MatrixD = Eigen::MatrixXd;
using VectorD = Eigen::VectorXd;

struct SymmetricEigen {
  VectorD values;   // ascending
  MatrixD vectors;  // columns
};

// Cyclic Jacobi rotations. Input must be symmetric.
SymmetricEigen JacobiEigen(const MatrixD& m, int max_sweeps = 100);

// Square root of a symmetric positive semi-definite matrix. Eigenvalues
// below 1e-8 are clamped to zero; throws std::invalid_argument when the
// input is markedly non-symmetric or has a significantly negative
// eigenvalue.
MatrixD PsdSqrt(const MatrixD& m);
Tensor PsdSqrt(const Tensor& m);

MatrixD ToMatrix(const Tensor& t);
Tensor FromMatrix(const MatrixD& m);

}  // namespace fgdm

#endif  // FGDM_NUMERICS_LINALG_H_
