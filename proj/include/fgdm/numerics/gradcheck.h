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

#ifndef FGDM_NUMERICS_GRADCHECK_H_
#define FGDM_NUMERICS_GRADCHECK_H_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fgdm/numerics/autograd.h"

namespace fgdm {

struct GradCheckOptions {
  Real step = 1e-3f;
  double tolerance = 1e-3;
  // Per parameter the error is normwise:
  //   max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|, floor)
  // over the checked coordinates. Single-coordinate ratios on tiny
  // components are dominated by float32 round-off at this step size.
  double floor = 1e-2;
  // Coordinates checked per parameter; 0 checks all of them.
  int64_t max_coordinates = 0;
  uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  // Coordinate with the largest absolute discrepancy.
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

// loss(tape) must bind the parameters through Bind(tape, p) and be
// deterministic; with a null tape it is evaluated without recording.
using LossFunction = std::function<Var(Tape*)>;

// Compares reverse-mode gradients with central differences. Throws
// std::domain_error if the loss is ever non-finite.
GradCheckReport CheckGradients(const LossFunction& loss,
                               std::span<Parameter* const> params,
                               const GradCheckOptions& options = {});

}  // namespace fgdm

#endif  // FGDM_NUMERICS_GRADCHECK_H_
