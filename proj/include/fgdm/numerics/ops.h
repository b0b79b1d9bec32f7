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

#ifndef FGDM_NUMERICS_OPS_H_
#define FGDM_NUMERICS_OPS_H_

#include <span>
#include <vector>

#include "fgdm/numerics/autograd.h"
#include "fgdm/numerics/tensor.h"

// Differentiable primitives. Every function records itself on the tape of
// its gradient-carrying inputs, or returns a constant when there is none.
// Reductions accumulate in double in a fixed loop order.
namespace fgdm::ops {

// Elementwise with NumPy-style broadcasting.
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Div(const Var& a, const Var& b);

Var Neg(const Var& x);
Var Scale(const Var& x, Real s);
Var AddScalar(const Var& x, Real s);
Var Square(const Var& x);
Var Exp(const Var& x);
Var Log(const Var& x);
Var Sqrt(const Var& x);
Var Silu(const Var& x);
// Tanh approximation.
Var Gelu(const Var& x);

Var Sum(const Var& x);
Var Mean(const Var& x);
Var SumAxis(const Var& x, int axis, bool keepdim);
Var MeanAxis(const Var& x, int axis, bool keepdim);

// [M,K]x[K,N] or batched [B,M,K]x[B,K,N]; transposes apply to the last two
// axes.
Var Matmul(const Var& a, const Var& b, bool transpose_a = false,
           bool transpose_b = false);
// x: [..., in], weight: [in, out], bias: [out] or undefined.
Var Linear(const Var& x, const Var& weight, const Var& bias);
// x: [N,C,H,W], weight: [O,C,k,k], bias: [O] or undefined.
Var Conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int padding);
// x: [N,C,...]; statistics per (sample, group) over channels-in-group and all
// trailing axes; gamma/beta: [C].
Var GroupNorm(const Var& x, int groups, const Var& gamma, const Var& beta,
              Real eps = 1e-5f);
// Normalizes over the last axis; gamma/beta: [D].
Var LayerNorm(const Var& x, const Var& gamma, const Var& beta,
              Real eps = 1e-5f);
// Along the last axis.
Var Softmax(const Var& x);

Var Reshape(const Var& x, Shape shape);
Var Permute(const Var& x, std::vector<int> perm);
Var Concat(std::span<const Var> parts, int axis);
// [N,C,H,W] -> [N,C,2H,2W].
Var UpsampleNearest2x(const Var& x);
// Bilinear, align-corners false. x: [N,C,H,W] -> [N,C,h,w].
Var ResizeBilinear(const Var& x, int64_t height, int64_t width);
// Rows of table [V,D] -> [ids.size(), D].
Var Embedding(const Var& table, std::span<const int> ids);
// mean((a-b)^2)
Var MseLoss(const Var& a, const Var& b);

}  // namespace fgdm::ops

namespace fgdm {

// Bilinear resize (align-corners false) of a [H,W] or [H,W,C] map.
// Identity sizes return a bitwise copy; outputs stay within the input range.
Tensor BilinearResize(const Tensor& map, int64_t height, int64_t width);

// Same kernel on [N,C,H,W] values, no autograd.
Tensor ResizeBilinearNchw(const Tensor& x, int64_t height, int64_t width);

}  // namespace fgdm

#endif  // FGDM_NUMERICS_OPS_H_
