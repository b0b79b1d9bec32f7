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

#include "fgdm/diffusion/schedule.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fgdm {

NoiseSchedule::NoiseSchedule(const ScheduleConfig& config) : config_(config) {
  const int T = config.steps;
  if (T < 1) throw std::invalid_argument("schedule needs at least one step");
  if (!(config.beta_start > 0.0 && config.beta_end < 1.0 &&
        config.beta_start <= config.beta_end)) {
    throw std::invalid_argument("schedule betas must satisfy 0 < start <= end < 1");
  }
  betas_.assign(T + 1, 0.0);
  alpha_bars_.assign(T + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : double(t - 1) / double(T - 1);
    betas_[t] = config.beta_start + frac * (config.beta_end - config.beta_start);
    alpha_bars_[t] = alpha_bars_[t - 1] * (1.0 - betas_[t]);
  }
}

void NoiseSchedule::CheckStep(int t, int lo) const {
  if (t < lo || t > T()) {
    throw std::out_of_range("timestep " + std::to_string(t) +
                            " outside [" + std::to_string(lo) + ", " +
                            std::to_string(T()) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  CheckStep(t, 1);
  return betas_[t];
}

double NoiseSchedule::alpha_bar(int t) const {
  CheckStep(t, 0);
  return alpha_bars_[t];
}

void SamplerConfig::Validate(int T) const {
  if (steps < 1 || steps > T) {
    throw std::invalid_argument("sampler steps must be in [1, " +
                                std::to_string(T) + "]");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw std::invalid_argument("sampler eta must be in [0, 1]");
  }
  if (!(guidance_scale >= 0.0)) {
    throw std::invalid_argument("guidance scale must be non-negative");
  }
}

Tensor ForwardNoise(const Tensor& z0, int t, const Tensor& eps,
                    const NoiseSchedule& sched) {
  RequireSameShape(z0, eps, "ForwardNoise");
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  Tensor out(z0.shape());
  auto o = out.mutable_data();
  auto x = z0.data();
  auto e = eps.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>(a * x[i] + b * e[i]);
  return out;
}

Tensor DdpmStep(const Tensor& z_t, const Tensor& eps_hat, int t,
                const Tensor& xi, const NoiseSchedule& sched) {
  RequireSameShape(z_t, eps_hat, "DdpmStep");
  const double beta = sched.beta(t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
  const double coef = beta / std::sqrt(1.0 - sched.alpha_bar(t));
  const double sigma = t == 1 ? 0.0 : std::sqrt(beta);
  if (sigma > 0.0) RequireSameShape(z_t, xi, "DdpmStep noise");
  Tensor out(z_t.shape());
  auto o = out.mutable_data();
  auto z = z_t.data();
  auto e = eps_hat.data();
  for (size_t i = 0; i < o.size(); ++i) {
    double v = inv_sqrt_alpha * (z[i] - coef * e[i]);
    if (sigma > 0.0) v += sigma * xi[i];
    o[i] = static_cast<Real>(v);
  }
  return out;
}

Tensor PredictX0(const Tensor& z_t, const Tensor& eps_hat, int t,
                 const NoiseSchedule& sched) {
  RequireSameShape(z_t, eps_hat, "PredictX0");
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  Tensor out(z_t.shape());
  auto o = out.mutable_data();
  auto z = z_t.data();
  auto e = eps_hat.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>((z[i] - b * e[i]) / a);
  return out;
}

double DdimSigma(int t, int t_prev, double eta, const NoiseSchedule& sched) {
  if (t_prev >= t) throw std::invalid_argument("DDIM step must decrease t");
  const double ab = sched.alpha_bar(t);
  const double ap = sched.alpha_bar(t_prev);
  return eta * std::sqrt((1.0 - ap) / (1.0 - ab)) * std::sqrt(1.0 - ab / ap);
}

Tensor DdimStep(const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev,
                double eta, const Tensor& xi, const NoiseSchedule& sched,
                bool clip_x0) {
  RequireSameShape(z_t, eps_hat, "DdimStep");
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw std::invalid_argument("DDIM eta must be in [0, 1]");
  }
  const double sigma = DdimSigma(t, t_prev, eta, sched);
  if (sigma > 0.0) RequireSameShape(z_t, xi, "DdimStep noise");
  const double ab = sched.alpha_bar(t);
  const double ap = sched.alpha_bar(t_prev);
  const double sa = std::sqrt(ab);
  const double sb = std::sqrt(1.0 - ab);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ap - sigma * sigma));
  Tensor out(z_t.shape());
  auto o = out.mutable_data();
  auto z = z_t.data();
  auto e = eps_hat.data();
  for (size_t i = 0; i < o.size(); ++i) {
    double x0 = (z[i] - sb * e[i]) / sa;
    double eps = e[i];
    if (clip_x0) {
      x0 = std::clamp(x0, -1.0, 1.0);
      eps = (z[i] - sa * x0) / sb;
    }
    double v = std::sqrt(ap) * x0 + dir * eps;
    if (sigma > 0.0) v += sigma * xi[i];
    o[i] = static_cast<Real>(v);
  }
  return out;
}

std::vector<int> DdimTimesteps(int T, int steps) {
  if (steps < 1 || steps > T) {
    throw std::invalid_argument("DDIM steps must be in [1, T]");
  }
  std::vector<int> ts;
  ts.reserve(steps);
  for (int k = steps; k >= 1; --k) {
    ts.push_back(static_cast<int>(std::llround(double(k) * T / steps)));
  }
  return ts;
}

Tensor CfgCombine(const Tensor& eps_cond, const Tensor& eps_uncond,
                  double scale) {
  RequireSameShape(eps_cond, eps_uncond, "CfgCombine");
  Tensor out(eps_cond.shape());
  auto o = out.mutable_data();
  auto c = eps_cond.data();
  auto u = eps_uncond.data();
  for (size_t i = 0; i < o.size(); ++i) {
    o[i] = static_cast<float>(u[i] + scale * (double(c[i]) - u[i]));
  }
  return out;
}

double DiffusionLoss(const Tensor& eps, const Tensor& eps_hat) {
  RequireSameShape(eps, eps_hat, "DiffusionLoss");
  double acc = 0.0;
  auto a = eps.data();
  auto b = eps_hat.data();
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace fgdm
