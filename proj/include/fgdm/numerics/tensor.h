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

#ifndef FGDM_NUMERICS_TENSOR_H_
#define FGDM_NUMERICS_TENSOR_H_

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fgdm {

// Element type. float32 normally; the float64 build exists for
// finite-difference gradient checks.
#ifdef FGDM_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<int64_t>;

int64_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Dense row-major array of Real. Storage is shared between copies and
// treated as immutable; mutable_data() detaches before handing out a
// writable view.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0.0f);
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor Scalar(Real value);
  static Tensor FromList(std::initializer_list<Real> values);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  // Negative axes count from the back.
  int64_t dim(int axis) const;
  int64_t numel() const { return numel_; }

  std::span<const Real> data() const;
  std::span<Real> mutable_data();
  const Real* raw() const { return storage_ ? storage_->data() : nullptr; }

  Real operator[](int64_t i) const { return (*storage_)[i]; }
  Real at(std::initializer_list<int64_t> index) const;
  // Value of a one-element tensor.
  Real item() const;

  // Same storage, new shape. Element count must match.
  Tensor Reshaped(Shape shape) const;
  Tensor Clone() const;

  bool AllFinite() const;
  bool BitwiseEqual(const Tensor& other) const;

 private:
  Shape shape_;
  int64_t numel_ = 0;
  std::shared_ptr<std::vector<Real>> storage_;
};

// Elementwise helpers on plain values, no autograd.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& a, Real s);
Tensor Concat(std::span<const Tensor> parts, int axis);
Real MaxAbsDiff(const Tensor& a, const Tensor& b);
Real MeanSquaredDiff(const Tensor& a, const Tensor& b);
void RequireSameShape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace fgdm

#endif  // FGDM_NUMERICS_TENSOR_H_
