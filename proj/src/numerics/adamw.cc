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

#include "fgdm/numerics/adamw.h"

#include <cmath>
#include <stdexcept>

namespace fgdm {

AdamW::AdamW(AdamWConfig config, std::vector<Parameter*> params)
    : config_(config), params_(std::move(params)) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamW::Step(std::span<const Tensor> grads) {
  if (grads.size() != params_.size()) {
    throw std::invalid_argument("AdamW: expected one gradient per parameter");
  }
  for (size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params_[i]->value.shape()) {
      throw std::invalid_argument("AdamW: gradient shape mismatch for " +
                                  params_[i]->name);
    }
    if (!grads[i].AllFinite()) {
      throw std::invalid_argument("AdamW: non-finite gradient for " +
                                  params_[i]->name);
    }
  }
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const Real c1 = static_cast<Real>(1.0 - std::pow(b1, static_cast<double>(step_)));
  const Real c2 = static_cast<Real>(1.0 - std::pow(b2, static_cast<double>(step_)));
  const Real lr = config_.learning_rate;
  const Real decay = 1.0f - lr * config_.weight_decay;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i]->value.mutable_data();
    auto m = m_[i].mutable_data();
    auto v = v_[i].mutable_data();
    auto g = grads[i].data();
    for (size_t j = 0; j < p.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0f - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0f - config_.beta2) * g[j] * g[j];
      const Real mhat = m[j] / c1;
      const Real vhat = v[j] / c2;
      p[j] = p[j] * decay - lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void AdamW::Restore(int64_t step, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw std::invalid_argument("AdamW::Restore: moment count mismatch");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    RequireSameShape(m[i], params_[i]->value, "AdamW::Restore");
    RequireSameShape(v[i], params_[i]->value, "AdamW::Restore");
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace fgdm
