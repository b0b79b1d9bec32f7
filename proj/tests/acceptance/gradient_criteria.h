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

#ifndef FGDM_TESTS_ACCEPTANCE_GRADIENT_CRITERIA_H_
#define FGDM_TESTS_ACCEPTANCE_GRADIENT_CRITERIA_H_

#include <cstdint>

// Finite-difference checks that run on the float64 build. The interface
// uses plain types so the float32 acceptance driver can link against it.
namespace fgdm_acceptance {

struct GradientResult {
  int seeds = 0;
  int64_t max_parameters = 0;  // largest checked network
  double max_rel_error = 0.0;  // worst over seeds and parameter tensors
  double seconds = 0.0;
};

// Full denoiser on configurations of at most 5k parameters, one random
// network, input and prompt batch per seed.
GradientResult DenoiserGradients(int seeds);

// Distillation loss with respect to the logits behind the student's
// attention maps.
GradientResult DistillGradients(int seeds);

}  // namespace fgdm_acceptance

#endif  // FGDM_TESTS_ACCEPTANCE_GRADIENT_CRITERIA_H_
