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

#ifndef FGDM_NUMERICS_ADAMW_H_
#define FGDM_NUMERICS_ADAMW_H_

#include <cstdint>
#include <span>
#include <vector>

#include "fgdm/numerics/autograd.h"

namespace fgdm {

struct AdamWConfig {
  Real learning_rate = 1e-3f;
  Real beta1 = 0.9f;
  Real beta2 = 0.999f;
  Real eps = 1e-8f;
  Real weight_decay = 0.0f;
};

// Adam with decoupled weight decay. Owns first/second moments for a fixed,
// ordered list of parameters.
class AdamW {
 public:
  AdamW(AdamWConfig config, std::vector<Parameter*> params);

  // grads[i] must match params[i] in shape and be finite.
  void Step(std::span<const Tensor> grads);

  int64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  void set_learning_rate(Real lr) { config_.learning_rate = lr; }
  const std::vector<Parameter*>& params() const { return params_; }

  // Moment buffers, exposed for checkpointing.
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void Restore(int64_t step, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  AdamWConfig config_;
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  int64_t step_ = 0;
};

}  // namespace fgdm

#endif  // FGDM_NUMERICS_ADAMW_H_
