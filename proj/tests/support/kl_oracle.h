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

#ifndef FGDM_TESTS_SUPPORT_KL_ORACLE_H_
#define FGDM_TESTS_SUPPORT_KL_ORACLE_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fgdm/denoiser/denoiser.h"
#include "fgdm/numerics/rng.h"

// Scalar reference for the attention distillation loss.
namespace fgdm::testing {

// Row-softmaxed map [N, h*w, K] from arbitrary logits.
inline AttentionRecord MakeRecord(AttentionKind kind, int h, int w, int64_t keys,
                           int64_t n, const std::function<double(int64_t, int64_t, int64_t)>& logit,
                           int layer) {
  const int64_t q = static_cast<int64_t>(h) * w;
  Tensor m({n, q, keys});
  auto d = m.mutable_data();
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t i = 0; i < q; ++i) {
      double z = 0.0;
      std::vector<double> e(keys);
      for (int64_t k = 0; k < keys; ++k) z += e[k] = std::exp(logit(b, i, k));
      for (int64_t k = 0; k < keys; ++k) d[(b * q + i) * keys + k] = static_cast<Real>(e[k] / z);
    }
  }
  return {layer, kind, h, w, Var::Constant(m)};
}

inline AttentionRecord RandomRecord(RngStream& rng, AttentionKind kind, int h, int w,
                             int64_t tokens, int64_t n, int layer) {
  const int64_t keys = kind == AttentionKind::kSelf ? static_cast<int64_t>(h) * w : tokens;
  return MakeRecord(kind, h, w, keys, n,
                    [&](int64_t, int64_t, int64_t) { return 2.0 * rng.Normal(); }, layer);
}

// Scalar reference: separable bilinear taps with half-pixel centres.
inline double Tap(int64_t in, int64_t out, int64_t d, int64_t* i0, int64_t* i1) {
  double src = (d + 0.5) * static_cast<double>(in) / out - 0.5;
  src = std::max(src, 0.0);
  *i0 = std::min<int64_t>(static_cast<int64_t>(std::floor(src)), in - 1);
  *i1 = std::min<int64_t>(*i0 + 1, in - 1);
  return *i1 == *i0 ? 0.0 : src - *i0;
}

inline double Sample2d(const std::function<double(int64_t, int64_t)>& f, int64_t h, int64_t w,
                int64_t H, int64_t W, int64_t y, int64_t x) {
  int64_t y0, y1, x0, x1;
  const double fy = Tap(h, H, y, &y0, &y1);
  const double fx = Tap(w, W, x, &x0, &x1);
  return (1 - fy) * ((1 - fx) * f(y0, x0) + fx * f(y0, x1)) +
         fy * ((1 - fx) * f(y1, x0) + fx * f(y1, x1));
}

// Aggregated [N][H*W][K] in double.
inline std::vector<std::vector<std::vector<double>>> OracleAggregate(
    const std::vector<AttentionRecord>& records, AttentionKind kind, int H, int W) {
  std::vector<std::vector<std::vector<double>>> acc;
  for (const AttentionRecord& r : records) {
    if (r.kind != kind) continue;
    const Tensor& m = r.map.value();
    const int64_t n = m.dim(0);
    const int64_t k_in = m.dim(2);
    const int64_t k_out = kind == AttentionKind::kSelf ? static_cast<int64_t>(H) * W : k_in;
    if (acc.empty()) {
      acc.assign(n, std::vector<std::vector<double>>(H * W, std::vector<double>(k_out, 0.0)));
    }
    auto at = [&](int64_t b, int64_t qy, int64_t qx, int64_t key) {
      return static_cast<double>(m[(b * r.height * r.width + qy * r.width + qx) * k_in + key]);
    };
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
          for (int64_t ko = 0; ko < k_out; ++ko) {
            double v;
            if (kind == AttentionKind::kCross) {
              v = Sample2d([&](int64_t a, int64_t c) { return at(b, a, c, ko); },
                           r.height, r.width, H, W, y, x);
            } else {
              const int64_t ky = ko / W;
              const int64_t kx = ko % W;
              v = Sample2d(
                  [&](int64_t a, int64_t c) {
                    return Sample2d([&](int64_t e, int64_t f) {
                      return at(b, a, c, e * r.width + f);
                    }, r.height, r.width, H, W, ky, kx);
                  },
                  r.height, r.width, H, W, y, x);
            }
            acc[b][y * W + x][ko] += v;
          }
        }
      }
    }
  }
  return acc;
}

inline double OracleKl(const std::vector<AttentionRecord>& teacher,
                const std::vector<AttentionRecord>& student, int H, int W) {
  double total = 0.0;
  for (AttentionKind kind : {AttentionKind::kSelf, AttentionKind::kCross}) {
    const auto p = OracleAggregate(teacher, kind, H, W);
    const auto q = OracleAggregate(student, kind, H, W);
    if (p.empty()) continue;
    double kind_total = 0.0;
    for (size_t b = 0; b < p.size(); ++b) {
      for (size_t i = 0; i < p[b].size(); ++i) {
        double sp = 0.0;
        double sq = 0.0;
        for (size_t k = 0; k < p[b][i].size(); ++k) {
          sp += p[b][i][k];
          sq += q[b][i][k];
        }
        for (size_t k = 0; k < p[b][i].size(); ++k) {
          const double pi = p[b][i][k] / sp;
          const double qi = q[b][i][k] / sq;
          if (pi > 0) kind_total += pi * std::log(pi / qi);
        }
      }
    }
    total += kind_total / static_cast<double>(p.size());
  }
  return total;
}

}  // namespace fgdm::testing

#endif  // FGDM_TESTS_SUPPORT_KL_ORACLE_H_
