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

#include "fgdm/numerics/tensor.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace fgdm {

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor dimensions must be positive, got " +
                                  ShapeString(shape));
    }
    n *= d;
  }
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Real fill)
    : shape_(std::move(shape)),
      numel_(NumElements(shape_)),
      storage_(std::make_shared<std::vector<Real>>(numel_, fill)) {}

Tensor::Tensor(Shape shape, std::vector<Real> values)
    : shape_(std::move(shape)), numel_(NumElements(shape_)) {
  if (static_cast<int64_t>(values.size()) != numel_) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(values.size()) +
                                " does not match shape " + ShapeString(shape_));
  }
  storage_ = std::make_shared<std::vector<Real>>(std::move(values));
}

Tensor Tensor::Scalar(Real value) { return Tensor(Shape{}, value); }

Tensor Tensor::FromList(std::initializer_list<Real> values) {
  return Tensor(Shape{static_cast<int64_t>(values.size())},
                std::vector<Real>(values));
}

int64_t Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw std::out_of_range("axis out of range for shape " +
                            ShapeString(shape_));
  }
  return shape_[axis];
}

std::span<const Real> Tensor::data() const {
  if (!storage_) return {};
  return {storage_->data(), storage_->size()};
}

std::span<Real> Tensor::mutable_data() {
  if (!storage_) return {};
  if (storage_.use_count() > 1) {
    storage_ = std::make_shared<std::vector<Real>>(*storage_);
  }
  return {storage_->data(), storage_->size()};
}

Real Tensor::at(std::initializer_list<int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) {
    throw std::invalid_argument("index rank mismatch");
  }
  int64_t offset = 0;
  int axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= shape_[axis]) throw std::out_of_range("index");
    offset = offset * shape_[axis] + i;
    ++axis;
  }
  return (*storage_)[offset];
}

Real Tensor::item() const {
  if (numel_ != 1) {
    throw std::invalid_argument("item() needs a one-element tensor, got " +
                                ShapeString(shape_));
  }
  return (*storage_)[0];
}

Tensor Tensor::Reshaped(Shape shape) const {
  if (NumElements(shape) != numel_) {
    throw std::invalid_argument("cannot reshape " + ShapeString(shape_) +
                                " to " + ShapeString(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

Tensor Tensor::Clone() const {
  Tensor out = *this;
  if (storage_) out.storage_ = std::make_shared<std::vector<Real>>(*storage_);
  return out;
}

bool Tensor::AllFinite() const {
  for (Real v : data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::BitwiseEqual(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  if (numel_ == 0) return true;
  return std::memcmp(raw(), other.raw(), sizeof(Real) * numel_) == 0;
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                ShapeString(a.shape()) + " vs " +
                                ShapeString(b.shape()));
  }
}

Tensor Add(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Add");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return out;
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Sub");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  return out;
}

Tensor Scale(const Tensor& a, Real s) {
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] * s;
  return out;
}

Tensor Concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("Concat: no inputs");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  Shape shape = parts[0].shape();
  int64_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != r) throw std::invalid_argument("Concat: rank mismatch");
    for (int i = 0; i < r; ++i) {
      if (i != axis && p.shape()[i] != shape[i]) {
        throw std::invalid_argument("Concat: shape mismatch");
      }
    }
    total += p.shape()[axis];
  }
  shape[axis] = total;
  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  int64_t inner = 1;
  for (int i = axis + 1; i < r; ++i) inner *= shape[i];
  Tensor out(shape);
  auto o = out.mutable_data();
  int64_t offset = 0;
  for (const Tensor& p : parts) {
    const int64_t chunk = p.shape()[axis] * inner;
    auto src = p.data();
    for (int64_t b = 0; b < outer; ++b) {
      std::copy_n(src.begin() + b * chunk, chunk,
                  o.begin() + b * total * inner + offset);
    }
    offset += chunk;
  }
  return out;
}

Real MaxAbsDiff(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "MaxAbsDiff");
  Real m = 0.0f;
  auto x = a.data();
  auto y = b.data();
  for (size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

Real MeanSquaredDiff(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "MeanSquaredDiff");
  double acc = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    acc += d * d;
  }
  return static_cast<Real>(acc / static_cast<double>(x.size()));
}

}  // namespace fgdm
