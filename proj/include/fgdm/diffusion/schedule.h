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

#ifndef FGDM_DIFFUSION_SCHEDULE_H_
#define FGDM_DIFFUSION_SCHEDULE_H_

#include <vector>

#include "fgdm/numerics/tensor.h"

namespace fgdm {

struct ScheduleConfig {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
};

// Linear beta ramp. Tables are indexed by t in 1..T; alpha_bar(0) is 1.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(const ScheduleConfig& config = {});

  int T() const { return static_cast<int>(betas_.size()) - 1; }
  const ScheduleConfig& config() const { return config_; }
  double beta(int t) const;
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const;

 private:
  void CheckStep(int t, int lo) const;

  ScheduleConfig config_;
  std::vector<double> betas_;       // betas_[0] unused
  std::vector<double> alpha_bars_;  // alpha_bars_[0] = 1
};

struct SamplerConfig {
  int steps = 20;
  double eta = 0.0;
  double guidance_scale = 1.0;
  // Clamp the x0 prediction to [-1, 1] before composing the DDIM update.
  // Without it, early high-noise steps amplify small eps errors by
  // 1/sqrt(abar_t) and pixel-space samples drift out of range.
  bool clip_x0 = true;

  void Validate(int T) const;
};

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, for t in 0..T.
Tensor ForwardNoise(const Tensor& z0, int t, const Tensor& eps,
                    const NoiseSchedule& sched);

// Ancestral step t -> t-1 with sigma_t^2 = beta_t. xi is ignored at t = 1.
Tensor DdpmStep(const Tensor& z_t, const Tensor& eps_hat, int t,
                const Tensor& xi, const NoiseSchedule& sched);

Tensor PredictX0(const Tensor& z_t, const Tensor& eps_hat, int t,
                 const NoiseSchedule& sched);

double DdimSigma(int t, int t_prev, double eta, const NoiseSchedule& sched);

// DDIM update t -> t_prev (t_prev may be 0). xi is only read when the step
// has non-zero variance and may be undefined otherwise.
Tensor DdimStep(const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev,
                double eta, const Tensor& xi, const NoiseSchedule& sched,
                bool clip_x0 = false);

// Descending timesteps T = t_n > ... > t_1, evenly spaced; the chain ends
// at 0 after t_1.
std::vector<int> DdimTimesteps(int T, int steps);

Tensor CfgCombine(const Tensor& eps_cond, const Tensor& eps_uncond,
                  double scale);

double DiffusionLoss(const Tensor& eps, const Tensor& eps_hat);

}  // namespace fgdm

#endif  // FGDM_DIFFUSION_SCHEDULE_H_
