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

#include "fgdm/numerics/ops.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>

#include "gemm.h"

namespace fgdm::ops {
namespace {

using internal::Gemm;

Var Result(Tensor value, std::span<const Var> inputs,
           std::function<void(Node&)> backward) {
  for (const Var& v : inputs) {
    if (v.requires_grad()) {
      return v.tape()->Record(std::move(value), inputs, std::move(backward));
    }
  }
  return Var::Constant(std::move(value));
}

Var Result(Tensor value, std::initializer_list<Var> inputs,
           std::function<void(Node&)> backward) {
  return Result(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

bool NeedsGrad(const Node& out, size_t i) {
  return out.inputs[i]->requires_grad;
}

double Precise(const Var& v) { return v.scalar(); }

Var WithPrecise(Var v, double p) {
  v.node()->precise = p;
  return v;
}

void Require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// ---- broadcasting -------------------------------------------------------

struct Broadcast {
  Shape out;
  std::vector<int64_t> stride_a;
  std::vector<int64_t> stride_b;
};

Broadcast MakeBroadcast(const Shape& a, const Shape& b) {
  const size_t r = std::max(a.size(), b.size());
  Broadcast bc;
  bc.out.assign(r, 1);
  bc.stride_a.assign(r, 0);
  bc.stride_b.assign(r, 0);
  int64_t run_a = 1;
  int64_t run_b = 1;
  for (size_t i = 0; i < r; ++i) {
    const size_t d = r - 1 - i;
    const int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    int64_t o;
    if (da == db || db == 1) {
      o = da;
    } else if (da == 1) {
      o = db;
    } else {
      throw std::invalid_argument("cannot broadcast " + ShapeString(a) +
                                  " with " + ShapeString(b));
    }
    bc.out[d] = o;
    bc.stride_a[d] = (da == 1 && o != 1) ? 0 : run_a;
    bc.stride_b[d] = (db == 1 && o != 1) ? 0 : run_b;
    run_a *= da;
    run_b *= db;
  }
  return bc;
}

template <typename F>
void ForEachBroadcast(const Broadcast& bc, F&& f) {
  const int r = static_cast<int>(bc.out.size());
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  const int64_t inner = bc.out[r - 1];
  const int64_t sa = bc.stride_a[r - 1];
  const int64_t sb = bc.stride_b[r - 1];
  const int64_t outer = NumElements(bc.out) / inner;
  std::vector<int64_t> idx(r, 0);
  int64_t oa = 0;
  int64_t ob = 0;
  int64_t io = 0;
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t j = 0; j < inner; ++j) f(io + j, oa + j * sa, ob + j * sb);
    io += inner;
    for (int d = r - 2; d >= 0; --d) {
      ++idx[d];
      oa += bc.stride_a[d];
      ob += bc.stride_b[d];
      if (idx[d] < bc.out[d]) break;
      oa -= bc.stride_a[d] * bc.out[d];
      ob -= bc.stride_b[d] * bc.out[d];
      idx[d] = 0;
    }
  }
}

template <typename Fwd, typename DA, typename DB>
Var Binary(const Var& a, const Var& b, Fwd fwd, DA da, DB db) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() == y.shape()) {
    Tensor out(x.shape());
    auto o = out.mutable_data();
    auto xs = x.data();
    auto ys = y.data();
    for (size_t i = 0; i < o.size(); ++i) o[i] = fwd(xs[i], ys[i]);
    const bool scalar = o.size() == 1;
    const double precise = scalar ? fwd(Precise(a), Precise(b)) : 0.0;
    Var result = Result(std::move(out), {a, b}, [da, db](Node& n) {
      auto g = n.grad();
      auto xs = n.inputs[0]->value.data();
      auto ys = n.inputs[1]->value.data();
      if (NeedsGrad(n, 0)) {
        auto ga = n.inputs[0]->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(xs[i], ys[i]);
      }
      if (NeedsGrad(n, 1)) {
        auto gb = n.inputs[1]->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * db(xs[i], ys[i]);
      }
    });
    return scalar ? WithPrecise(std::move(result), precise) : result;
  }
  auto bc = std::make_shared<Broadcast>(MakeBroadcast(x.shape(), y.shape()));
  Tensor out(bc->out);
  auto o = out.mutable_data();
  auto xs = x.data();
  auto ys = y.data();
  ForEachBroadcast(*bc, [&](int64_t io, int64_t ia, int64_t ib) {
    o[io] = fwd(xs[ia], ys[ib]);
  });
  return Result(std::move(out), {a, b}, [bc, da, db](Node& n) {
    auto g = n.grad();
    auto xs = n.inputs[0]->value.data();
    auto ys = n.inputs[1]->value.data();
    if (NeedsGrad(n, 0)) {
      auto ga = n.inputs[0]->grad_buffer();
      ForEachBroadcast(*bc, [&](int64_t io, int64_t ia, int64_t ib) {
        ga[ia] += g[io] * da(xs[ia], ys[ib]);
      });
    }
    if (NeedsGrad(n, 1)) {
      auto gb = n.inputs[1]->grad_buffer();
      ForEachBroadcast(*bc, [&](int64_t io, int64_t ia, int64_t ib) {
        gb[ib] += g[io] * db(xs[ia], ys[ib]);
      });
    }
  });
}

// deriv(x, y) where y = fwd(x).
template <typename Fwd, typename Deriv>
Var Unary(const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xs = x.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = fwd(xs[i]);
  const bool scalar = o.size() == 1;
  const double precise = scalar ? fwd(Precise(a)) : 0.0;
  Var result = Result(std::move(out), {a}, [deriv](Node& n) {
    auto g = n.grad();
    auto xs = n.inputs[0]->value.data();
    auto ys = n.value.data();
    auto ga = n.inputs[0]->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xs[i], ys[i]);
  });
  return scalar ? WithPrecise(std::move(result), precise) : result;
}

Real Sigmoid(Real x) { return 1.0f / (1.0f + std::exp(-x)); }

constexpr Real kGeluC = 0.7978845608028654f;  // sqrt(2/pi)

struct AxisSplit {
  int64_t outer;
  int64_t len;
  int64_t inner;
};

AxisSplit SplitAt(const Shape& s, int axis) {
  AxisSplit sp{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) sp.outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

int NormalizeAxis(int axis, int rank) {
  if (axis < 0) axis += rank;
  Require(axis >= 0 && axis < rank, "axis out of range");
  return axis;
}

// ---- bilinear helpers -------------------------------------------------

struct LerpIndex {
  int64_t i0;
  int64_t i1;
  Real frac;
};

std::vector<LerpIndex> LerpTable(int64_t in, int64_t out) {
  std::vector<LerpIndex> table(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int64_t i0 = static_cast<int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int64_t i1 = std::min(i0 + 1, in - 1);
    Real frac = static_cast<Real>(src - static_cast<double>(i0));
    if (i1 == i0) frac = 0.0f;
    table[d] = {i0, i1, frac};
  }
  return table;
}

// Resizes planes of shape [h_in, w_in] with stride 'step' between channel
// elements (1 for planar, C for interleaved HWC).
void ResizePlane(const Real* src, int64_t h_in, int64_t w_in, Real* dst,
                 int64_t h_out, int64_t w_out, int64_t step,
                 const std::vector<LerpIndex>& ty,
                 const std::vector<LerpIndex>& tx) {
  for (int64_t oy = 0; oy < h_out; ++oy) {
    const LerpIndex& ly = ty[oy];
    const Real* r0 = src + ly.i0 * w_in * step;
    const Real* r1 = src + ly.i1 * w_in * step;
    for (int64_t ox = 0; ox < w_out; ++ox) {
      const LerpIndex& lx = tx[ox];
      const Real a = r0[lx.i0 * step];
      const Real b = r0[lx.i1 * step];
      const Real c = r1[lx.i0 * step];
      const Real d = r1[lx.i1 * step];
      const Real top = a + lx.frac * (b - a);
      const Real bottom = c + lx.frac * (d - c);
      Real v = top + ly.frac * (bottom - top);
      const Real lo = std::min(std::min(a, b), std::min(c, d));
      const Real hi = std::max(std::max(a, b), std::max(c, d));
      v = std::clamp(v, lo, hi);
      dst[(oy * w_out + ox) * step] = v;
    }
  }
  (void)h_in;
}

void ResizePlaneBackward(const Real* gout, int64_t w_in, Real* gin,
                         int64_t h_out, int64_t w_out,
                         const std::vector<LerpIndex>& ty,
                         const std::vector<LerpIndex>& tx) {
  for (int64_t oy = 0; oy < h_out; ++oy) {
    const LerpIndex& ly = ty[oy];
    for (int64_t ox = 0; ox < w_out; ++ox) {
      const LerpIndex& lx = tx[ox];
      const Real g = gout[oy * w_out + ox];
      const Real wy0 = 1.0f - ly.frac;
      const Real wx0 = 1.0f - lx.frac;
      gin[ly.i0 * w_in + lx.i0] += g * wy0 * wx0;
      gin[ly.i0 * w_in + lx.i1] += g * wy0 * lx.frac;
      gin[ly.i1 * w_in + lx.i0] += g * ly.frac * wx0;
      gin[ly.i1 * w_in + lx.i1] += g * ly.frac * lx.frac;
    }
  }
}

// ---- convolution helpers ----------------------------------------------

struct ConvGeom {
  int64_t c, h, w, k, stride, pad, ho, wo;
};

void Im2Col(const Real* x, const ConvGeom& g, Real* col) {
  const int64_t p = g.ho * g.wo;
  for (int64_t c = 0; c < g.c; ++c) {
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        Real* row = col + ((c * g.k + ky) * g.k + kx) * p;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          Real* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.wo, 0.0f);
            continue;
          }
          const Real* src = x + (c * g.h + iy) * g.w;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void Col2Im(const Real* col, const ConvGeom& g, Real* x) {
  const int64_t p = g.ho * g.wo;
  for (int64_t c = 0; c < g.c; ++c) {
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        const Real* row = col + ((c * g.k + ky) * g.k + kx) * p;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          Real* dst = x + (c * g.h + iy) * g.w;
          const Real* src = row + oy * g.wo;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var Add(const Var& a, const Var& b) {
  return Binary(
      a, b, [](auto x, auto y) { return x + y; },
      [](Real, Real) { return 1.0f; }, [](Real, Real) { return 1.0f; });
}

Var Sub(const Var& a, const Var& b) {
  return Binary(
      a, b, [](auto x, auto y) { return x - y; },
      [](Real, Real) { return 1.0f; }, [](Real, Real) { return -1.0f; });
}

Var Mul(const Var& a, const Var& b) {
  return Binary(
      a, b, [](auto x, auto y) { return x * y; },
      [](Real, Real y) { return y; }, [](Real x, Real) { return x; });
}

Var Div(const Var& a, const Var& b) {
  return Binary(
      a, b, [](auto x, auto y) { return x / y; },
      [](Real, Real y) { return 1.0f / y; },
      [](Real x, Real y) { return -x / (y * y); });
}

Var Neg(const Var& x) { return Scale(x, -1.0f); }

Var Scale(const Var& x, Real s) {
  return Unary(
      x, [s](auto v) { return v * s; }, [s](Real, Real) { return s; });
}

Var AddScalar(const Var& x, Real s) {
  return Unary(
      x, [s](auto v) { return v + s; }, [](Real, Real) { return 1.0f; });
}

Var Square(const Var& x) {
  return Unary(
      x, [](auto v) { return v * v; }, [](Real v, Real) { return 2.0f * v; });
}

Var Exp(const Var& x) {
  return Unary(
      x, [](auto v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

Var Log(const Var& x) {
  return Unary(
      x, [](auto v) { return std::log(v); },
      [](Real v, Real) { return 1.0f / v; });
}

Var Sqrt(const Var& x) {
  return Unary(
      x, [](auto v) { return std::sqrt(v); },
      [](Real, Real y) { return 0.5f / y; });
}

Var Silu(const Var& x) {
  return Unary(
      x, [](auto v) { return v / (1 + std::exp(-v)); },
      [](Real v, Real) {
        const Real s = Sigmoid(v);
        return s * (1.0f + v * (1.0f - s));
      });
}

Var Gelu(const Var& x) {
  return Unary(
      x,
      [](auto v) {
        const auto u = kGeluC * (v + 0.044715f * v * v * v);
        return 0.5f * v * (1 + std::tanh(u));
      },
      [](Real v, Real) {
        const Real u = kGeluC * (v + 0.044715f * v * v * v);
        const Real t = std::tanh(u);
        const Real du = kGeluC * (1.0f + 3.0f * 0.044715f * v * v);
        return 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
      });
}

Var Sum(const Var& x) {
  double acc = 0.0;
  for (Real v : x.value().data()) acc += v;
  return WithPrecise(
      Result(Tensor::Scalar(static_cast<Real>(acc)), {x},
             [](Node& n) {
               const Real g = n.grad()[0];
               for (Real& v : n.inputs[0]->grad_buffer()) v += g;
             }),
      acc);
}

Var Mean(const Var& x) {
  const double count = static_cast<double>(x.value().numel());
  double acc = 0.0;
  for (Real v : x.value().data()) acc += v;
  return WithPrecise(
      Result(Tensor::Scalar(static_cast<Real>(acc / count)), {x},
             [count](Node& n) {
               const Real g = static_cast<Real>(n.grad()[0] / count);
               for (Real& v : n.inputs[0]->grad_buffer()) v += g;
             }),
      acc / count);
}

Var SumAxis(const Var& x, int axis, bool keepdim) {
  const Shape& s = x.shape();
  axis = NormalizeAxis(axis, x.rank());
  const AxisSplit sp = SplitAt(s, axis);
  Shape out_shape = s;
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + axis);
  }
  Tensor out(out_shape);
  auto o = out.mutable_data();
  auto xs = x.value().data();
  std::vector<double> acc(sp.inner);
  for (int64_t a = 0; a < sp.outer; ++a) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int64_t l = 0; l < sp.len; ++l) {
      const Real* row = xs.data() + (a * sp.len + l) * sp.inner;
      for (int64_t i = 0; i < sp.inner; ++i) acc[i] += row[i];
    }
    for (int64_t i = 0; i < sp.inner; ++i) {
      o[a * sp.inner + i] = static_cast<Real>(acc[i]);
    }
  }
  return Result(std::move(out), {x}, [sp](Node& n) {
    auto g = n.grad();
    auto gx = n.inputs[0]->grad_buffer();
    for (int64_t a = 0; a < sp.outer; ++a) {
      for (int64_t l = 0; l < sp.len; ++l) {
        Real* row = gx.data() + (a * sp.len + l) * sp.inner;
        for (int64_t i = 0; i < sp.inner; ++i) row[i] += g[a * sp.inner + i];
      }
    }
  });
}

Var MeanAxis(const Var& x, int axis, bool keepdim) {
  const int ax = NormalizeAxis(axis, x.rank());
  return Scale(SumAxis(x, ax, keepdim),
               1.0f / static_cast<Real>(x.shape()[ax]));
}

Var Matmul(const Var& a, const Var& b, bool transpose_a, bool transpose_b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Require(sa.size() == sb.size() && (sa.size() == 2 || sa.size() == 3),
          "Matmul: operands must both be rank 2 or rank 3");
  const bool batched = sa.size() == 3;
  const int64_t batch = batched ? sa[0] : 1;
  if (batched) Require(sb[0] == batch, "Matmul: batch mismatch");
  const size_t o = batched ? 1 : 0;
  const int64_t m = transpose_a ? sa[o + 1] : sa[o];
  const int64_t k = transpose_a ? sa[o] : sa[o + 1];
  const int64_t kb = transpose_b ? sb[o + 1] : sb[o];
  const int64_t n = transpose_b ? sb[o] : sb[o + 1];
  Require(k == kb, "Matmul: inner dimension mismatch " + ShapeString(sa) +
                       " x " + ShapeString(sb));
  Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
  Tensor out(out_shape);
  const Real* pa = a.value().raw();
  const Real* pb = b.value().raw();
  Real* pc = out.mutable_data().data();
  for (int64_t i = 0; i < batch; ++i) {
    Gemm(transpose_a, transpose_b, m, n, k, pa + i * m * k, pb + i * k * n,
         pc + i * m * n, false);
  }
  return Result(std::move(out), {a, b},
                [=](Node& nd) {
                  const Real* g = nd.grad().data();
                  const Real* pa = nd.inputs[0]->value.raw();
                  const Real* pb = nd.inputs[1]->value.raw();
                  if (NeedsGrad(nd, 0)) {
                    Real* ga = nd.inputs[0]->grad_buffer().data();
                    for (int64_t i = 0; i < batch; ++i) {
                      const Real* gi = g + i * m * n;
                      if (!transpose_a) {
                        Gemm(false, !transpose_b, m, k, n, gi, pb + i * k * n,
                             ga + i * m * k, true);
                      } else {
                        Gemm(transpose_b, true, k, m, n, pb + i * k * n, gi,
                             ga + i * m * k, true);
                      }
                    }
                  }
                  if (NeedsGrad(nd, 1)) {
                    Real* gb = nd.inputs[1]->grad_buffer().data();
                    for (int64_t i = 0; i < batch; ++i) {
                      const Real* gi = g + i * m * n;
                      if (!transpose_b) {
                        Gemm(!transpose_a, false, k, n, m, pa + i * m * k, gi,
                             gb + i * k * n, true);
                      } else {
                        Gemm(true, transpose_a, n, k, m, gi, pa + i * m * k,
                             gb + i * k * n, true);
                      }
                    }
                  }
                });
}

Var Linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  Require(sw.size() == 2 && !sx.empty() && sx.back() == sw[0],
          "Linear: input " + ShapeString(sx) + " vs weight " + ShapeString(sw));
  const int64_t in = sw[0];
  const int64_t out_dim = sw[1];
  const int64_t rows = x.value().numel() / in;
  const bool has_bias = bias.defined();
  if (has_bias) {
    Require(bias.value().numel() == out_dim, "Linear: bias size mismatch");
  }
  Shape out_shape = sx;
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  Real* po = out.mutable_data().data();
  // One product per leading-axis slice, so a row's result does not depend
  // on how many other examples share the batch.
  const int64_t slices = sx.size() > 1 ? sx[0] : 1;
  const int64_t slice_rows = rows / slices;
  for (int64_t s = 0; s < slices; ++s) {
    Gemm(false, false, slice_rows, out_dim, in,
         x.value().raw() + s * slice_rows * in, weight.value().raw(),
         po + s * slice_rows * out_dim, false);
  }
  if (has_bias) {
    const Real* pb = bias.value().raw();
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t j = 0; j < out_dim; ++j) po[r * out_dim + j] += pb[j];
    }
  }
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Result(std::move(out), inputs, [=](Node& n) {
    const Real* g = n.grad().data();
    if (NeedsGrad(n, 0)) {
      Gemm(false, true, rows, in, out_dim, g, n.inputs[1]->value.raw(),
           n.inputs[0]->grad_buffer().data(), true);
    }
    if (NeedsGrad(n, 1)) {
      Gemm(true, false, in, out_dim, rows, n.inputs[0]->value.raw(), g,
           n.inputs[1]->grad_buffer().data(), true);
    }
    if (has_bias && NeedsGrad(n, 2)) {
      auto gb = n.inputs[2]->grad_buffer();
      std::vector<double> acc(out_dim, 0.0);
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t j = 0; j < out_dim; ++j) acc[j] += g[r * out_dim + j];
      }
      for (int64_t j = 0; j < out_dim; ++j) gb[j] += static_cast<Real>(acc[j]);
    }
  });
}

Var Conv2d(const Var& x, const Var& weight, const Var& bias, int stride,
           int padding) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  Require(sx.size() == 4, "Conv2d: input must be [N,C,H,W], got " +
                              ShapeString(sx));
  Require(sw.size() == 4 && sw[1] == sx[1] && sw[2] == sw[3],
          "Conv2d: weight " + ShapeString(sw) + " incompatible with input " +
              ShapeString(sx));
  Require(stride >= 1 && padding >= 0, "Conv2d: bad stride/padding");
  ConvGeom geom{sx[1], sx[2], sx[3], sw[2], stride, padding, 0, 0};
  geom.ho = (geom.h + 2 * padding - geom.k) / stride + 1;
  geom.wo = (geom.w + 2 * padding - geom.k) / stride + 1;
  Require(geom.ho >= 1 && geom.wo >= 1, "Conv2d: output would be empty");
  const int64_t batch = sx[0];
  const int64_t out_c = sw[0];
  const int64_t ckk = geom.c * geom.k * geom.k;
  const int64_t p = geom.ho * geom.wo;
  const bool direct = geom.k == 1 && stride == 1 && padding == 0;
  const bool has_bias = bias.defined();
  if (has_bias) Require(bias.value().numel() == out_c, "Conv2d: bias size");

  Tensor out(Shape{batch, out_c, geom.ho, geom.wo});
  Real* po = out.mutable_data().data();
  const Real* px = x.value().raw();
  const Real* pw = weight.value().raw();
  std::vector<Real> col(direct ? 0 : ckk * p);
  for (int64_t n = 0; n < batch; ++n) {
    const Real* xn = px + n * geom.c * geom.h * geom.w;
    const Real* src = xn;
    if (!direct) {
      Im2Col(xn, geom, col.data());
      src = col.data();
    }
    Real* on = po + n * out_c * p;
    Gemm(false, false, out_c, p, ckk, pw, src, on, false);
    if (has_bias) {
      const Real* pb = bias.value().raw();
      for (int64_t o = 0; o < out_c; ++o) {
        for (int64_t i = 0; i < p; ++i) on[o * p + i] += pb[o];
      }
    }
  }
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Result(std::move(out), inputs, [=](Node& nd) {
    const Real* g = nd.grad().data();
    const Real* px = nd.inputs[0]->value.raw();
    const Real* pw = nd.inputs[1]->value.raw();
    const bool need_x = NeedsGrad(nd, 0);
    const bool need_w = NeedsGrad(nd, 1);
    Real* gx = need_x ? nd.inputs[0]->grad_buffer().data() : nullptr;
    Real* gw = need_w ? nd.inputs[1]->grad_buffer().data() : nullptr;
    std::vector<Real> col(direct ? 0 : ckk * p);
    std::vector<Real> dcol(direct ? 0 : ckk * p);
    for (int64_t n = 0; n < batch; ++n) {
      const Real* gn = g + n * out_c * p;
      const int64_t x_off = n * geom.c * geom.h * geom.w;
      if (need_w) {
        const Real* src = px + x_off;
        if (!direct) {
          Im2Col(px + x_off, geom, col.data());
          src = col.data();
        }
        Gemm(false, true, out_c, ckk, p, gn, src, gw, true);
      }
      if (need_x) {
        if (direct) {
          Gemm(true, false, ckk, p, out_c, pw, gn, gx + x_off, true);
        } else {
          Gemm(true, false, ckk, p, out_c, pw, gn, dcol.data(), false);
          Col2Im(dcol.data(), geom, gx + x_off);
        }
      }
    }
    if (has_bias && NeedsGrad(nd, 2)) {
      auto gb = nd.inputs[2]->grad_buffer();
      for (int64_t o = 0; o < out_c; ++o) {
        double acc = 0.0;
        for (int64_t n = 0; n < batch; ++n) {
          const Real* row = g + (n * out_c + o) * p;
          for (int64_t i = 0; i < p; ++i) acc += row[i];
        }
        gb[o] += static_cast<Real>(acc);
      }
    }
  });
}

namespace {

// Shared normalization kernel: 'groups' contiguous blocks of 'block' values
// each; element i of a block uses affine index affine_of(i).
struct NormStats {
  std::vector<Real> mean;
  std::vector<Real> inv_std;
};

}  // namespace

Var GroupNorm(const Var& x, int groups, const Var& gamma, const Var& beta,
              Real eps) {
  const Shape& s = x.shape();
  Require(s.size() >= 2, "GroupNorm: input must be [N,C,...]");
  const int64_t batch = s[0];
  const int64_t channels = s[1];
  Require(groups >= 1 && channels % groups == 0,
          "GroupNorm: groups must divide channels");
  Require(gamma.value().numel() == channels && beta.value().numel() == channels,
          "GroupNorm: affine size mismatch");
  int64_t spatial = 1;
  for (size_t i = 2; i < s.size(); ++i) spatial *= s[i];
  const int64_t cpg = channels / groups;
  const int64_t block = cpg * spatial;
  auto stats = std::make_shared<NormStats>();
  stats->mean.resize(batch * groups);
  stats->inv_std.resize(batch * groups);
  Tensor out(s);
  Real* po = out.mutable_data().data();
  const Real* px = x.value().raw();
  const Real* pg = gamma.value().raw();
  const Real* pb = beta.value().raw();
  for (int64_t b = 0; b < batch * groups; ++b) {
    const Real* xb = px + b * block;
    double sum = 0.0;
    for (int64_t i = 0; i < block; ++i) sum += xb[i];
    const double mean = sum / static_cast<double>(block);
    double var = 0.0;
    for (int64_t i = 0; i < block; ++i) {
      const double d = xb[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(block);
    const Real inv = static_cast<Real>(1.0 / std::sqrt(var + eps));
    stats->mean[b] = static_cast<Real>(mean);
    stats->inv_std[b] = inv;
    const int64_t c0 = (b % groups) * cpg;
    Real* ob = po + b * block;
    for (int64_t c = 0; c < cpg; ++c) {
      const Real gm = pg[c0 + c];
      const Real bt = pb[c0 + c];
      for (int64_t i = 0; i < spatial; ++i) {
        const int64_t j = c * spatial + i;
        ob[j] = (xb[j] - stats->mean[b]) * inv * gm + bt;
      }
    }
  }
  return Result(std::move(out), {x, gamma, beta}, [=](Node& n) {
    const Real* g = n.grad().data();
    const Real* px = n.inputs[0]->value.raw();
    const Real* pg = n.inputs[1]->value.raw();
    const bool need_x = NeedsGrad(n, 0);
    Real* gx = need_x ? n.inputs[0]->grad_buffer().data() : nullptr;
    std::vector<double> dgamma(channels, 0.0);
    std::vector<double> dbeta(channels, 0.0);
    for (int64_t b = 0; b < batch * groups; ++b) {
      const Real* xb = px + b * block;
      const Real* gb = g + b * block;
      const Real mean = stats->mean[b];
      const Real inv = stats->inv_std[b];
      const int64_t c0 = (b % groups) * cpg;
      double sum1 = 0.0;
      double sum2 = 0.0;
      for (int64_t c = 0; c < cpg; ++c) {
        const Real gm = pg[c0 + c];
        for (int64_t i = 0; i < spatial; ++i) {
          const int64_t j = c * spatial + i;
          const Real xhat = (xb[j] - mean) * inv;
          const Real dxhat = gb[j] * gm;
          sum1 += dxhat;
          sum2 += static_cast<double>(dxhat) * xhat;
          dgamma[c0 + c] += static_cast<double>(gb[j]) * xhat;
          dbeta[c0 + c] += gb[j];
        }
      }
      if (need_x) {
        const Real m1 = static_cast<Real>(sum1 / static_cast<double>(block));
        const Real m2 = static_cast<Real>(sum2 / static_cast<double>(block));
        Real* gxb = gx + b * block;
        for (int64_t c = 0; c < cpg; ++c) {
          const Real gm = pg[c0 + c];
          for (int64_t i = 0; i < spatial; ++i) {
            const int64_t j = c * spatial + i;
            const Real xhat = (xb[j] - mean) * inv;
            gxb[j] += inv * (gb[j] * gm - m1 - xhat * m2);
          }
        }
      }
    }
    if (NeedsGrad(n, 1)) {
      auto gg = n.inputs[1]->grad_buffer();
      for (int64_t c = 0; c < channels; ++c) gg[c] += static_cast<Real>(dgamma[c]);
    }
    if (NeedsGrad(n, 2)) {
      auto gbt = n.inputs[2]->grad_buffer();
      for (int64_t c = 0; c < channels; ++c) gbt[c] += static_cast<Real>(dbeta[c]);
    }
  });
}

Var LayerNorm(const Var& x, const Var& gamma, const Var& beta, Real eps) {
  const Shape& s = x.shape();
  Require(!s.empty(), "LayerNorm: scalar input");
  const int64_t d = s.back();
  Require(gamma.value().numel() == d && beta.value().numel() == d,
          "LayerNorm: affine size mismatch");
  const int64_t rows = x.value().numel() / d;
  auto stats = std::make_shared<NormStats>();
  stats->mean.resize(rows);
  stats->inv_std.resize(rows);
  Tensor out(s);
  Real* po = out.mutable_data().data();
  const Real* px = x.value().raw();
  const Real* pg = gamma.value().raw();
  const Real* pb = beta.value().raw();
  for (int64_t r = 0; r < rows; ++r) {
    const Real* xr = px + r * d;
    double sum = 0.0;
    for (int64_t i = 0; i < d; ++i) sum += xr[i];
    const double mean = sum / static_cast<double>(d);
    double var = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      const double diff = xr[i] - mean;
      var += diff * diff;
    }
    var /= static_cast<double>(d);
    const Real inv = static_cast<Real>(1.0 / std::sqrt(var + eps));
    stats->mean[r] = static_cast<Real>(mean);
    stats->inv_std[r] = inv;
    for (int64_t i = 0; i < d; ++i) {
      po[r * d + i] = (xr[i] - stats->mean[r]) * inv * pg[i] + pb[i];
    }
  }
  return Result(std::move(out), {x, gamma, beta}, [=](Node& n) {
    const Real* g = n.grad().data();
    const Real* px = n.inputs[0]->value.raw();
    const Real* pg = n.inputs[1]->value.raw();
    const bool need_x = NeedsGrad(n, 0);
    Real* gx = need_x ? n.inputs[0]->grad_buffer().data() : nullptr;
    std::vector<double> dgamma(d, 0.0);
    std::vector<double> dbeta(d, 0.0);
    for (int64_t r = 0; r < rows; ++r) {
      const Real* xr = px + r * d;
      const Real* gr = g + r * d;
      const Real mean = stats->mean[r];
      const Real inv = stats->inv_std[r];
      double sum1 = 0.0;
      double sum2 = 0.0;
      for (int64_t i = 0; i < d; ++i) {
        const Real xhat = (xr[i] - mean) * inv;
        const Real dxhat = gr[i] * pg[i];
        sum1 += dxhat;
        sum2 += static_cast<double>(dxhat) * xhat;
        dgamma[i] += static_cast<double>(gr[i]) * xhat;
        dbeta[i] += gr[i];
      }
      if (need_x) {
        const Real m1 = static_cast<Real>(sum1 / static_cast<double>(d));
        const Real m2 = static_cast<Real>(sum2 / static_cast<double>(d));
        for (int64_t i = 0; i < d; ++i) {
          const Real xhat = (xr[i] - mean) * inv;
          gx[r * d + i] += inv * (gr[i] * pg[i] - m1 - xhat * m2);
        }
      }
    }
    if (NeedsGrad(n, 1)) {
      auto gg = n.inputs[1]->grad_buffer();
      for (int64_t i = 0; i < d; ++i) gg[i] += static_cast<Real>(dgamma[i]);
    }
    if (NeedsGrad(n, 2)) {
      auto gbt = n.inputs[2]->grad_buffer();
      for (int64_t i = 0; i < d; ++i) gbt[i] += static_cast<Real>(dbeta[i]);
    }
  });
}

Var Softmax(const Var& x) {
  const Shape& s = x.shape();
  Require(!s.empty(), "Softmax: scalar input");
  const int64_t d = s.back();
  const int64_t rows = x.value().numel() / d;
  Tensor out(s);
  Real* po = out.mutable_data().data();
  const Real* px = x.value().raw();
  for (int64_t r = 0; r < rows; ++r) {
    const Real* xr = px + r * d;
    Real* orow = po + r * d;
    const Real mx = *std::max_element(xr, xr + d);
    double total = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      orow[i] = std::exp(xr[i] - mx);
      total += orow[i];
    }
    const Real inv = static_cast<Real>(1.0 / total);
    for (int64_t i = 0; i < d; ++i) orow[i] *= inv;
  }
  return Result(std::move(out), {x}, [d, rows](Node& n) {
    const Real* g = n.grad().data();
    const Real* y = n.value.raw();
    Real* gx = n.inputs[0]->grad_buffer().data();
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int64_t i = 0; i < d; ++i) {
        dot += static_cast<double>(g[r * d + i]) * y[r * d + i];
      }
      const Real fd = static_cast<Real>(dot);
      for (int64_t i = 0; i < d; ++i) {
        gx[r * d + i] += y[r * d + i] * (g[r * d + i] - fd);
      }
    }
  });
}

Var Reshape(const Var& x, Shape shape) {
  Tensor out = x.value().Reshaped(std::move(shape));
  return Result(std::move(out), {x}, [](Node& n) {
    auto g = n.grad();
    auto gx = n.inputs[0]->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var Permute(const Var& x, std::vector<int> perm) {
  const Shape& s = x.shape();
  const int r = x.rank();
  Require(static_cast<int>(perm.size()) == r, "Permute: rank mismatch");
  std::vector<int64_t> in_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * s[i + 1];
  Shape out_shape(r);
  std::vector<int64_t> strides(r);
  std::vector<bool> seen(r, false);
  for (int i = 0; i < r; ++i) {
    Require(perm[i] >= 0 && perm[i] < r && !seen[perm[i]],
            "Permute: invalid permutation");
    seen[perm[i]] = true;
    out_shape[i] = s[perm[i]];
    strides[i] = in_strides[perm[i]];
  }
  // offsets[i] = input offset of output element i.
  auto offsets = std::make_shared<std::vector<int64_t>>(NumElements(out_shape));
  {
    std::vector<int64_t> idx(r, 0);
    int64_t off = 0;
    for (int64_t i = 0; i < static_cast<int64_t>(offsets->size()); ++i) {
      (*offsets)[i] = off;
      for (int d = r - 1; d >= 0; --d) {
        ++idx[d];
        off += strides[d];
        if (idx[d] < out_shape[d]) break;
        off -= strides[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  Tensor out(out_shape);
  auto o = out.mutable_data();
  auto xs = x.value().data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = xs[(*offsets)[i]];
  return Result(std::move(out), {x}, [offsets](Node& n) {
    auto g = n.grad();
    auto gx = n.inputs[0]->grad_buffer();
    for (size_t i = 0; i < g.size(); ++i) gx[(*offsets)[i]] += g[i];
  });
}

Var Concat(std::span<const Var> parts, int axis) {
  Require(!parts.empty(), "Concat: no inputs");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const Var& p : parts) values.push_back(p.value());
  Tensor out = fgdm::Concat(values, axis);
  const int ax = NormalizeAxis(axis, parts[0].rank());
  const AxisSplit sp = SplitAt(out.shape(), ax);
  std::vector<int64_t> lens;
  for (const Var& p : parts) lens.push_back(p.shape()[ax]);
  return Result(std::move(out), parts, [sp, lens](Node& n) {
    auto g = n.grad();
    int64_t offset = 0;
    for (size_t k = 0; k < lens.size(); ++k) {
      const int64_t chunk = lens[k] * sp.inner;
      if (n.inputs[k]->requires_grad) {
        auto gk = n.inputs[k]->grad_buffer();
        for (int64_t b = 0; b < sp.outer; ++b) {
          const Real* src = g.data() + b * sp.len * sp.inner + offset;
          Real* dst = gk.data() + b * chunk;
          for (int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += chunk;
    }
  });
}

Var UpsampleNearest2x(const Var& x) {
  const Shape& s = x.shape();
  Require(s.size() == 4, "UpsampleNearest2x: input must be [N,C,H,W]");
  const int64_t planes = s[0] * s[1];
  const int64_t h = s[2];
  const int64_t w = s[3];
  Tensor out(Shape{s[0], s[1], 2 * h, 2 * w});
  Real* po = out.mutable_data().data();
  const Real* px = x.value().raw();
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t y = 0; y < 2 * h; ++y) {
      for (int64_t xx = 0; xx < 2 * w; ++xx) {
        po[(p * 2 * h + y) * 2 * w + xx] = px[(p * h + y / 2) * w + xx / 2];
      }
    }
  }
  return Result(std::move(out), {x}, [planes, h, w](Node& n) {
    const Real* g = n.grad().data();
    Real* gx = n.inputs[0]->grad_buffer().data();
    for (int64_t p = 0; p < planes; ++p) {
      for (int64_t y = 0; y < 2 * h; ++y) {
        for (int64_t xx = 0; xx < 2 * w; ++xx) {
          gx[(p * h + y / 2) * w + xx / 2] += g[(p * 2 * h + y) * 2 * w + xx];
        }
      }
    }
  });
}

Var ResizeBilinear(const Var& x, int64_t height, int64_t width) {
  const Shape& s = x.shape();
  Require(s.size() == 4, "ResizeBilinear: input must be [N,C,H,W]");
  Require(height >= 1 && width >= 1, "ResizeBilinear: zero-sized target");
  if (s[2] == height && s[3] == width) return x;
  const int64_t planes = s[0] * s[1];
  const int64_t h = s[2];
  const int64_t w = s[3];
  auto ty = std::make_shared<std::vector<LerpIndex>>(LerpTable(h, height));
  auto tx = std::make_shared<std::vector<LerpIndex>>(LerpTable(w, width));
  Tensor out(Shape{s[0], s[1], height, width});
  Real* po = out.mutable_data().data();
  const Real* px = x.value().raw();
  for (int64_t p = 0; p < planes; ++p) {
    ResizePlane(px + p * h * w, h, w, po + p * height * width, height, width, 1,
                *ty, *tx);
  }
  return Result(std::move(out), {x}, [=](Node& n) {
    const Real* g = n.grad().data();
    Real* gx = n.inputs[0]->grad_buffer().data();
    for (int64_t p = 0; p < planes; ++p) {
      ResizePlaneBackward(g + p * height * width, w, gx + p * h * w, height,
                          width, *ty, *tx);
    }
  });
}

Var Embedding(const Var& table, std::span<const int> ids) {
  const Shape& s = table.shape();
  Require(s.size() == 2, "Embedding: table must be [V,D]");
  const int64_t vocab = s[0];
  const int64_t d = s[1];
  auto rows = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  Tensor out(Shape{static_cast<int64_t>(ids.size()), d});
  Real* po = out.mutable_data().data();
  const Real* pt = table.value().raw();
  for (size_t i = 0; i < ids.size(); ++i) {
    Require(ids[i] >= 0 && ids[i] < vocab, "Embedding: id out of range");
    std::copy_n(pt + ids[i] * d, d, po + i * d);
  }
  return Result(std::move(out), {table}, [rows, d](Node& n) {
    const Real* g = n.grad().data();
    Real* gt = n.inputs[0]->grad_buffer().data();
    for (size_t i = 0; i < rows->size(); ++i) {
      for (int64_t j = 0; j < d; ++j) gt[(*rows)[i] * d + j] += g[i * d + j];
    }
  });
}

Var MseLoss(const Var& a, const Var& b) {
  Require(a.shape() == b.shape(), "MseLoss: shape mismatch " +
                                      ShapeString(a.shape()) + " vs " +
                                      ShapeString(b.shape()));
  auto xa = a.value().data();
  auto xb = b.value().data();
  const double count = static_cast<double>(xa.size());
  double acc = 0.0;
  for (size_t i = 0; i < xa.size(); ++i) {
    const double d = static_cast<double>(xa[i]) - xb[i];
    acc += d * d;
  }
  return WithPrecise(Result(Tensor::Scalar(static_cast<Real>(acc / count)), {a, b},
                [count](Node& n) {
                  const Real g = static_cast<Real>(2.0 * n.grad()[0] / count);
                  auto xa = n.inputs[0]->value.data();
                  auto xb = n.inputs[1]->value.data();
                  if (NeedsGrad(n, 0)) {
                    auto ga = n.inputs[0]->grad_buffer();
                    for (size_t i = 0; i < xa.size(); ++i) ga[i] += g * (xa[i] - xb[i]);
                  }
                  if (NeedsGrad(n, 1)) {
                    auto gb = n.inputs[1]->grad_buffer();
                    for (size_t i = 0; i < xa.size(); ++i) gb[i] -= g * (xa[i] - xb[i]);
                  }
                }), acc / count);
}

}  // namespace fgdm::ops

namespace fgdm {

Tensor BilinearResize(const Tensor& map, int64_t height, int64_t width) {
  const Shape& s = map.shape();
  if (s.size() != 2 && s.size() != 3) {
    throw std::invalid_argument("BilinearResize: map must be [H,W] or [H,W,C]");
  }
  if (height < 1 || width < 1) {
    throw std::invalid_argument("BilinearResize: zero-sized target");
  }
  const int64_t h = s[0];
  const int64_t w = s[1];
  const int64_t c = s.size() == 3 ? s[2] : 1;
  if (h == height && w == width) return map.Clone();
  Shape out_shape = s.size() == 3 ? Shape{height, width, c} : Shape{height, width};
  Tensor out(out_shape);
  const auto ty = ops::LerpTable(h, height);
  const auto tx = ops::LerpTable(w, width);
  for (int64_t ch = 0; ch < c; ++ch) {
    ops::ResizePlane(map.raw() + ch, h, w, out.mutable_data().data() + ch,
                     height, width, c, ty, tx);
  }
  return out;
}

Tensor ResizeBilinearNchw(const Tensor& x, int64_t height, int64_t width) {
  return ops::ResizeBilinear(Var::Constant(x), height, width).value();
}

}  // namespace fgdm
