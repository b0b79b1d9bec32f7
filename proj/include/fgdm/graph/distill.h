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

#ifndef FGDM_GRAPH_DISTILL_H_
#define FGDM_GRAPH_DISTILL_H_

#include <span>

#include "fgdm/denoiser/denoiser.h"
#include "fgdm/numerics/autograd.h"

namespace fgdm {

struct DistillConfig {
  bool self_attention = true;
  bool cross_attention = true;
};

// Sums the maps of one attention kind over layers after bilinearly
// upscaling each to a height x width query grid (and, for self attention,
// key grid). Result: [N, height * width, K].
Var AggregateAttention(std::span<const AttentionRecord> records,
                       AttentionKind kind, int height, int width);

// Batch mean over examples of sum over query rows of KL(p || q), where p and
// q are the rows of `teacher` and `student` renormalized to sum to one.
// Evaluated in double; differentiable in `student`.
Var RowKl(const Tensor& teacher, const Var& student);

// Sum over enabled kinds of RowKl between the aggregated teacher and
// student maps. Teacher values are treated as constants. Throws
// std::invalid_argument for empty record sets or mismatched key lengths.
Var AttentionDistillLoss(std::span<const AttentionRecord> teacher,
                         std::span<const AttentionRecord> student,
                         const DistillConfig& config = {});

}  // namespace fgdm

#endif  // FGDM_GRAPH_DISTILL_H_
