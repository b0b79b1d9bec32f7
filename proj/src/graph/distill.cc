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

#include "fgdm/graph/distill.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fgdm/numerics/ops.h"

namespace fgdm {
namespace {

constexpr double kTiny = 1e-30;

Var UpscaleRecord(const AttentionRecord& r, int height, int width) {
  const int64_t n = r.map.dim(0);
  const int64_t q = r.map.dim(1);
  int64_t k = r.map.dim(2);
  if (q != static_cast<int64_t>(r.height) * r.width) {
    throw std::invalid_argument("attention record has inconsistent query size");
  }
  Var m = r.map;
  if (r.height != height || r.width != width) {
    m = ops::Reshape(m, {n, r.height, r.width, k});
    m = ops::Permute(m, {0, 3, 1, 2});
    m = ops::ResizeBilinear(m, height, width);
    m = ops::Permute(m, {0, 2, 3, 1});
    m = ops::Reshape(m, {n, static_cast<int64_t>(height) * width, k});
  }
  if (r.kind == AttentionKind::kSelf && (r.height != height || r.width != width)) {
    const int64_t hw = static_cast<int64_t>(height) * width;
    m = ops::Reshape(m, {n, hw, r.height, r.width});
    m = ops::ResizeBilinear(m, height, width);
    m = ops::Reshape(m, {n, hw, hw});
  }
  return m;
}

void CommonGrid(std::span<const AttentionRecord> a,
                std::span<const AttentionRecord> b, AttentionKind kind,
                int* height, int* width) {
  *height = 0;
  *width = 0;
  for (auto set : {a, b}) {
    for (const AttentionRecord& r : set) {
      if (r.kind != kind) continue;
      *height = std::max(*height, r.height);
      *width = std::max(*width, r.width);
    }
  }
}

}  // namespace

Var AggregateAttention(std::span<const AttentionRecord> records,
                       AttentionKind kind, int height, int width) {
  Var total;
  for (const AttentionRecord& r : records) {
    if (r.kind != kind) continue;
    const Var up = UpscaleRecord(r, height, width);
    if (total.defined() && up.shape() != total.shape()) {
      throw std::invalid_argument("attention maps disagree in shape: " +
                                  ShapeString(up.shape()) + " vs " +
                                  ShapeString(total.shape()));
    }
    total = total.defined() ? ops::Add(total, up) : up;
  }
  if (!total.defined()) throw std::invalid_argument("no attention records of the requested kind");
  return total;
}

Var RowKl(const Tensor& teacher, const Var& student) {
  RequireSameShape(teacher, student.value(), "RowKl");
  if (teacher.rank() != 3) throw std::invalid_argument("RowKl expects [N,Q,K]");
  const int64_t n = teacher.dim(0);
  const int64_t rows = n * teacher.dim(1);
  const int64_t k = teacher.dim(2);
  auto p = teacher.data();
  auto a = student.value().data();
  double total = 0.0;
  std::vector<double> grad(a.size());
  for (int64_t r = 0; r < rows; ++r) {
    double sp = 0.0;
    double sq = 0.0;
    for (int64_t i = 0; i < k; ++i) {
      sp += p[r * k + i];
      sq += a[r * k + i];
    }
    if (sp <= 0.0) continue;
    sq = std::max(sq, kTiny);
    double kl = 0.0;
    for (int64_t i = 0; i < k; ++i) {
      const double pi = p[r * k + i] / sp;
      const double ai = std::max(static_cast<double>(a[r * k + i]), kTiny);
      if (pi > 0.0) kl += pi * std::log(pi / (ai / sq));
      grad[r * k + i] = (-pi / ai + 1.0 / sq) / static_cast<double>(n);
    }
    total += kl;
  }
  total /= static_cast<double>(n);
  Var out;
  Tensor value = Tensor::Scalar(static_cast<Real>(total));
  if (student.tape() != nullptr && student.requires_grad()) {
    const Var inputs[] = {student};
    out = student.tape()->Record(
        std::move(value), inputs, [grad = std::move(grad)](Node& node) {
          const double g = node.grad()[0];
          auto dst = node.inputs[0]->grad_buffer();
          for (size_t i = 0; i < dst.size(); ++i) {
            dst[i] += static_cast<Real>(g * grad[i]);
          }
        });
  } else {
    out = Var::Constant(std::move(value));
  }
  out.node()->precise = total;
  return out;
}

Var AttentionDistillLoss(std::span<const AttentionRecord> teacher,
                         std::span<const AttentionRecord> student,
                         const DistillConfig& config) {
  if (teacher.empty() || student.empty()) {
    throw std::invalid_argument("distillation needs teacher and student records");
  }
  Var loss;
  double precise = 0.0;
  for (AttentionKind kind : {AttentionKind::kSelf, AttentionKind::kCross}) {
    if (kind == AttentionKind::kSelf && !config.self_attention) continue;
    if (kind == AttentionKind::kCross && !config.cross_attention) continue;
    int h = 0;
    int w = 0;
    CommonGrid(teacher, student, kind, &h, &w);
    if (h == 0) continue;
    std::vector<AttentionRecord> frozen(teacher.begin(), teacher.end());
    for (AttentionRecord& r : frozen) r.map = Var::Constant(r.map.value());
    const Var t = AggregateAttention(frozen, kind, h, w);
    const Var s = AggregateAttention(student, kind, h, w);
    if (t.shape() != s.shape()) {
      throw std::invalid_argument("teacher and student attention shapes differ: " +
                                  ShapeString(t.shape()) + " vs " +
                                  ShapeString(s.shape()));
    }
    const Var term = RowKl(t.value(), s);
    precise += term.scalar();
    loss = loss.defined() ? ops::Add(loss, term) : term;
  }
  if (!loss.defined()) throw std::invalid_argument("no attention kind selected");
  loss.node()->precise = precise;
  return loss;
}

}  // namespace fgdm
