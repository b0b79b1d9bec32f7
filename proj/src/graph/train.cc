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

#include "fgdm/graph/train.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "fgdm/numerics/json_keys.h"
#include "fgdm/numerics/ops.h"

namespace fgdm {
namespace {

Tensor Slice(const Tensor& batch, int64_t index) {
  Shape shape = batch.shape();
  const int64_t inner = batch.numel() / shape[0];
  shape[0] = 1;
  auto d = batch.data();
  return Tensor(shape, std::vector<Real>(d.begin() + index * inner,
                                         d.begin() + (index + 1) * inner));
}

// z_t per example at its own timestep.
Tensor NoiseBatch(const Tensor& z0, std::span<const int> t, const Tensor& eps,
                  const NoiseSchedule& schedule) {
  std::vector<Tensor> parts;
  for (int64_t e = 0; e < z0.dim(0); ++e) {
    parts.push_back(ForwardNoise(Slice(z0, e), t[e], Slice(eps, e), schedule));
  }
  return Concat(parts, 0);
}

std::vector<int> DrawTimesteps(RngStream rng, int64_t n, int T) {
  std::vector<int> t(n);
  for (int& v : t) v = static_cast<int>(rng.UniformInt(1, T));
  return t;
}

const Tensor& Require(const TrainBatch& batch, const std::string& variable) {
  auto it = batch.latents.find(variable);
  if (it == batch.latents.end()) {
    throw std::invalid_argument("training batch is missing \"" + variable +
                                "\" (missing-modality training is not supported)");
  }
  if (it->second.rank() != 4 || it->second.dim(0) != batch.size()) {
    throw std::invalid_argument("training batch latent \"" + variable +
                                "\" has shape " + ShapeString(it->second.shape()));
  }
  return it->second;
}

nlohmann::json AdamToJson(const AdamWConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay}};
}

AdamWConfig AdamFromJson(const nlohmann::json& j) {
  RequireKnownKeys(j, {"learning_rate", "beta1", "beta2", "eps", "weight_decay"},
                   "optimizer");
  AdamWConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  return c;
}

}  // namespace

void TrainConfig::Validate() const {
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    throw std::invalid_argument("dropout probability must be in [0, 1)");
  }
  if (!(lambda_kl >= 0.0)) throw std::invalid_argument("lambda_kl must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (!(optimizer.learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
}

nlohmann::json TrainConfig::ToJson() const {
  return {{"dropout_prob", dropout_prob},
          {"lambda_kl", lambda_kl},
          {"batch_size", batch_size},
          {"steps", steps},
          {"optimizer", AdamToJson(optimizer)},
          {"distill", {{"self_attention", distill.self_attention},
                       {"cross_attention", distill.cross_attention}}},
          {"factors", factors},
          {"seed", seed}};
}

TrainConfig TrainConfig::FromJson(const nlohmann::json& j) {
  RequireKnownKeys(j, {"dropout_prob", "lambda_kl", "batch_size", "steps",
                       "optimizer", "distill", "factors", "seed"},
                   "train config");
  TrainConfig c;
  c.dropout_prob = j.value("dropout_prob", c.dropout_prob);
  c.lambda_kl = j.value("lambda_kl", c.lambda_kl);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  if (j.contains("optimizer")) c.optimizer = AdamFromJson(j.at("optimizer"));
  if (j.contains("distill")) {
    const auto& d = j.at("distill");
    RequireKnownKeys(d, {"self_attention", "cross_attention"}, "distill");
    c.distill.self_attention = d.value("self_attention", true);
    c.distill.cross_attention = d.value("cross_attention", true);
  }
  c.factors = j.value("factors", c.factors);
  c.seed = j.value("seed", c.seed);
  c.Validate();
  return c;
}

bool DropoutPlan::Any(int64_t example) const {
  for (uint8_t d : dropped.at(example)) {
    if (d) return true;
  }
  return false;
}

int64_t DropoutPlan::CountDropped() const {
  int64_t n = 0;
  for (size_t e = 0; e < dropped.size(); ++e) n += Any(e) ? 1 : 0;
  return n;
}

DropoutPlan PlanDropout(RngStream& rng, int64_t batch, int num_variables,
                        double probability) {
  if (num_variables < 1) throw std::invalid_argument("no conditioning variables");
  DropoutPlan plan;
  plan.dropped.assign(batch, std::vector<uint8_t>(num_variables, 0));
  for (int64_t e = 0; e < batch; ++e) {
    if (!rng.Bernoulli(probability)) continue;
    const int size = num_variables == 1
                         ? 1
                         : static_cast<int>(rng.UniformInt(1, num_variables - 1));
    std::vector<int> order(num_variables);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < size; ++i) {
      std::swap(order[i], order[rng.UniformInt(i, num_variables - 1)]);
      plan.dropped[e][order[i]] = 1;
    }
  }
  return plan;
}

std::string StageName(TrainingStage stage) {
  return stage == TrainingStage::kTeacher ? "teacher" : "factors";
}

Trainer::Trainer(FgdmModel& model, TrainConfig config, TrainingStage stage)
    : model_(model), config_(std::move(config)), stage_(stage),
      schedule_(model.spec().schedule) {
  config_.Validate();
  for (const std::string& name : config_.factors) {
    bool found = false;
    for (const FactorSpec& f : model.spec().factors) found = found || f.name == name;
    if (!found) throw std::invalid_argument("unknown factor \"" + name + "\"");
  }
  model_.SetStage(stage);
  optimizer_ = std::make_unique<AdamW>(config_.optimizer, model_.TrainableParams());
}

DropoutPlan Trainer::PlannedDropout(int64_t step, int64_t batch) const {
  RngStream rng(config_.seed, "train/dropout/" + StageName(stage_), step);
  const int m = stage_ == TrainingStage::kTeacher ? 1 : model_.spec().num_factors();
  return PlanDropout(rng, batch, m, config_.dropout_prob);
}

LossBreakdown Trainer::Step(const TrainBatch& batch) {
  if (batch.size() < 1) throw std::invalid_argument("empty training batch");
  Tape tape;
  Var total;
  LossBreakdown out = stage_ == TrainingStage::kTeacher
                          ? TeacherStep(batch, tape, total)
                          : FactorStep(batch, tape, total);
  tape.Backward(total);
  std::vector<Tensor> grads;
  for (Parameter* p : optimizer_->params()) grads.push_back(tape.ParamGrad(*p));
  optimizer_->Step(grads);
  out.total = total.scalar();
  return out;
}

LossBreakdown Trainer::TeacherStep(const TrainBatch& batch, Tape& tape, Var& total) {
  const int64_t n = batch.size();
  const int64_t step = optimizer_->step_count();
  LossBreakdown out;
  out.step = step;
  out.dropout = PlannedDropout(step, n);
  const Tensor& x0 = Require(batch, kImageVariable);
  const std::vector<int> t =
      DrawTimesteps(RngStream(config_.seed, "train/t/teacher", step), n, schedule_.T());
  const Tensor eps = RngStream(config_.seed, "train/eps/teacher", step).NormalTensor(x0.shape());
  const Tensor z_t = NoiseBatch(x0, t, eps, schedule_);
  std::vector<std::vector<int>> prompts = batch.prompts;
  for (int64_t e = 0; e < n; ++e) {
    if (out.dropout.dropped[e][0]) prompts[e].clear();
  }
  const PromptBatch prompt = model_.text().Encode(&tape, prompts);
  const Var eps_hat = model_.TeacherForward(&tape, Var::Constant(z_t), t, prompt).eps;
  total = ops::MseLoss(eps_hat, Var::Constant(eps));
  out.factor_mse["teacher"] = total.scalar();
  return out;
}

LossBreakdown Trainer::FactorStep(const TrainBatch& batch, Tape& tape, Var& total) {
  const GraphSpec& spec = model_.spec();
  for (const Parameter* p : model_.backbone().params().List()) {
    if (p->trainable) throw std::logic_error("the teacher backbone must be frozen");
  }
  for (const Parameter* p : model_.text().params().List()) {
    if (p->trainable) throw std::logic_error("the text encoder must be frozen");
  }
  const int64_t n = batch.size();
  const int64_t step = optimizer_->step_count();
  LossBreakdown out;
  out.step = step;
  for (const FactorSpec& f : spec.factors) Require(batch, f.output);
  // Variable 0 is the prompt; visual variables follow in chain order.
  out.dropout = PlannedDropout(step, n);
  std::vector<std::vector<int>> prompts = batch.prompts;
  for (int64_t e = 0; e < n; ++e) {
    if (out.dropout.dropped[e][0]) prompts[e].clear();
  }
  const PromptBatch prompt = model_.text().Encode(nullptr, prompts);
  for (int i = 0; i < spec.num_factors(); ++i) {
    const FactorSpec& f = spec.factors[i];
    if (!config_.factors.empty() &&
        std::find(config_.factors.begin(), config_.factors.end(), f.name) ==
            config_.factors.end()) {
      continue;
    }
    const Tensor& x0 = batch.latents.at(f.output);
    const std::vector<int> t = DrawTimesteps(
        RngStream(config_.seed, "train/t/" + f.name, step), n, schedule_.T());
    const Tensor eps =
        RngStream(config_.seed, "train/eps/" + f.name, step).NormalTensor(x0.shape());
    const Tensor z_t = NoiseBatch(x0, t, eps, schedule_);
    // Parents enter at the level the joint sampler feeds them: one step
    // below the child's timestep, with noise from a stream of their own.
    FactorInputs inputs;
    inputs.prompts = prompts;
    const std::vector<int> parents = spec.ParentIndices(i);
    for (int p : parents) {
      const std::string& pv = spec.factors[p].output;
      const Tensor& y0 = batch.latents.at(pv);
      const Tensor noise =
          RngStream(config_.seed, "train/cond/" + f.name + "/" + pv, step)
              .NormalTensor(y0.shape());
      std::vector<int> level(t);
      for (int& v : level) v -= 1;
      inputs.parents.push_back(NoiseBatch(y0, level, noise, schedule_));
      std::vector<uint8_t> present(n);
      for (int64_t e = 0; e < n; ++e) present[e] = out.dropout.dropped[e][p + 1] ? 0 : 1;
      inputs.present.push_back(std::move(present));
    }
    const Var z = Var::Constant(z_t);
    const DenoiserOutput student = model_.Forward(&tape, i, z, t, prompt, inputs);
    const Var mse = ops::MseLoss(student.eps, Var::Constant(eps));
    out.factor_mse[f.name] = mse.scalar();
    total = total.defined() ? ops::Add(total, mse) : mse;
    if (i == 0 && f.output != kImageVariable && config_.lambda_kl > 0.0) {
      const DenoiserOutput teacher = model_.TeacherForward(nullptr, z, t, prompt);
      const Var kl = AttentionDistillLoss(teacher.records, student.records, config_.distill);
      out.kl = kl.scalar();
      total = ops::Add(total, ops::Scale(kl, static_cast<Real>(config_.lambda_kl)));
    }
  }
  if (!total.defined()) throw std::invalid_argument("no factor selected for training");
  return out;
}

void Trainer::ExportTo(Checkpoint& ckpt) const {
  const std::string prefix = "optim/" + StageName(stage_) + "/";
  const auto& params = optimizer_->params();
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string key = std::to_string(i) + "/" + params[i]->name;
    ckpt.tensors[prefix + "m/" + key] = optimizer_->first_moments()[i];
    ckpt.tensors[prefix + "v/" + key] = optimizer_->second_moments()[i];
  }
  ckpt.meta["optim"][StageName(stage_)] = {{"step", optimizer_->step_count()}};
}

void Trainer::ImportFrom(const Checkpoint& ckpt) {
  const std::string stage = StageName(stage_);
  if (!ckpt.meta.contains("optim") || !ckpt.meta["optim"].contains(stage)) return;
  const std::string prefix = "optim/" + stage + "/";
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  const auto& params = optimizer_->params();
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string key = std::to_string(i) + "/" + params[i]->name;
    m.push_back(ckpt.Get(prefix + "m/" + key));
    v.push_back(ckpt.Get(prefix + "v/" + key));
  }
  optimizer_->Restore(ckpt.meta["optim"][stage].at("step").get<int64_t>(),
                      std::move(m), std::move(v));
}

}  // namespace fgdm
