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

#include "fgdm/numerics/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fgdm/numerics/rng.h"

namespace fgdm {
namespace {

double Evaluate(const LossFunction& loss) {
  const Var v = loss(nullptr);
  const double value = v.scalar();
  if (!std::isfinite(value)) {
    throw std::domain_error("gradient check: loss is not finite");
  }
  return value;
}

}  // namespace

GradCheckReport CheckGradients(const LossFunction& loss,
                               std::span<Parameter* const> params,
                               const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    const Var l = loss(&tape);
    if (!std::isfinite(l.value().item())) {
      throw std::domain_error("gradient check: loss is not finite");
    }
    tape.Backward(l);
    for (Parameter* p : params) analytic.push_back(tape.ParamGrad(*p));
  }
  GradCheckReport report;
  report.passed = true;
  RngStream rng(options.seed, "gradcheck");
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    const int64_t n = p.value.numel();
    std::vector<int64_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coordinates > 0 && options.max_coordinates < n) {
      for (int64_t i = 0; i < options.max_coordinates; ++i) {
        std::swap(coords[i], coords[rng.UniformInt(i, n - 1)]);
      }
      coords.resize(options.max_coordinates);
    }
    GradCheckEntry entry{p.name};
    double max_diff = 0.0;
    double scale = options.floor;
    for (int64_t idx : coords) {
      const Real original = p.value[idx];
      p.value.mutable_data()[idx] = original + options.step;
      const double up = Evaluate(loss);
      p.value.mutable_data()[idx] = original - options.step;
      const double down = Evaluate(loss);
      p.value.mutable_data()[idx] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[pi][idx];
      const double diff = std::abs(a - numeric);
      scale = std::max({scale, std::abs(a), std::abs(numeric)});
      if (diff > max_diff || entry.worst_index < 0) {
        max_diff = diff;
        entry.worst_index = idx;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    entry.max_rel_error = max_diff / scale;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    if (entry.max_rel_error > options.tolerance) report.passed = false;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace fgdm
