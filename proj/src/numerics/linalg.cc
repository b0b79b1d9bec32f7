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

#include "fgdm/numerics/linalg.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fgdm {

SymmetricEigen JacobiEigen(const MatrixD& input, int max_sweeps) {
  const Eigen::Index n = input.rows();
  if (input.cols() != n) throw std::invalid_argument("JacobiEigen: not square");
  MatrixD a = input;
  MatrixD v = MatrixD::Identity(n, n);
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (std::sqrt(off) <= 1e-15 * scale) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });
  SymmetricEigen out{VectorD(n), MatrixD(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = a(order[i], order[i]);
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

MatrixD PsdSqrt(const MatrixD& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("PsdSqrt: not square");
  const double norm = m.norm();
  const double asym = (m - m.transpose()).norm();
  if (asym > 1e-4 * (1.0 + norm)) {
    throw std::invalid_argument("PsdSqrt: input is not symmetric");
  }
  const MatrixD sym = 0.5 * (m + m.transpose());
  SymmetricEigen eig = JacobiEigen(sym);
  const double largest = std::max(1.0, eig.values.cwiseAbs().maxCoeff());
  VectorD roots(eig.values.size());
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    const double lambda = eig.values(i);
    if (lambda < -1e-6 * largest) {
      throw std::invalid_argument("PsdSqrt: input is indefinite");
    }
    roots(i) = lambda < 1e-8 ? 0.0 : std::sqrt(lambda);
  }
  MatrixD s = eig.vectors * roots.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (s + s.transpose());
}

MatrixD ToMatrix(const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("ToMatrix: need rank 2");
  MatrixD m(t.dim(0), t.dim(1));
  for (int64_t i = 0; i < t.dim(0); ++i) {
    for (int64_t j = 0; j < t.dim(1); ++j) m(i, j) = t[i * t.dim(1) + j];
  }
  return m;
}

Tensor FromMatrix(const MatrixD& m) {
  Tensor t(Shape{m.rows(), m.cols()});
  auto d = t.mutable_data();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      d[i * m.cols() + j] = static_cast<Real>(m(i, j));
    }
  }
  return t;
}

Tensor PsdSqrt(const Tensor& m) { return FromMatrix(PsdSqrt(ToMatrix(m))); }

}  // namespace fgdm
