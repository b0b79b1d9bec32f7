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

#include "fgdm/numerics/autograd.h"

#include <cstring>
#include <stdexcept>

#include "fgdm/numerics/rng.h"

namespace fgdm {

std::span<Real> Node::grad_buffer() {
  if (grad_.empty()) grad_.assign(value.numel(), 0.0f);
  return grad_;
}

Var Var::Constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node), nullptr);
}

double Var::scalar() const {
  const double p = node_->precise;
  return p == p ? p : static_cast<double>(node_->value.item());
}

Tensor Var::grad() const {
  if (!node_) throw std::logic_error("grad() of undefined Var");
  if (!node_->has_grad()) return Tensor(shape());
  auto g = node_->grad();
  return Tensor(shape(), std::vector<Real>(g.begin(), g.end()));
}

Var Tape::Leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  if (!requires_grad) return Var(std::move(node), nullptr);
  nodes_.push_back(node);
  return Var(std::move(node), this);
}

Var Tape::Param(const Parameter& p) {
  if (!p.trainable) return Var::Constant(p.value);
  auto it = params_.find(&p);
  if (it != params_.end()) return it->second;
  Var v = Leaf(p.value, true);
  v.node()->param = &p;
  params_.emplace(&p, v);
  param_order_.push_back(&p);
  return v;
}

Var Tape::Record(Tensor value, std::span<const Var> inputs,
                 std::function<void(Node&)> backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.requires_grad()) {
      if (in.tape() != this) {
        throw std::logic_error("operation mixes values from different tapes");
      }
      needs = true;
    }
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!needs) return Var(std::move(node), nullptr);
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (const Var& in : inputs) node->inputs.push_back(in.node_ptr());
  node->backward = std::move(backward);
  nodes_.push_back(node);
  return Var(std::move(node), this);
}

void Tape::Backward(const Var& loss) {
  if (!loss.defined() || loss.value().numel() != 1) {
    throw std::invalid_argument("Backward needs a scalar loss");
  }
  if (loss.tape() != this || !loss.requires_grad()) {
    throw std::invalid_argument("loss was not recorded on this tape");
  }
  if (backward_done_) throw std::logic_error("Backward called twice");
  backward_done_ = true;
  loss.node()->grad_buffer()[0] = 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.has_grad() && n.backward) n.backward(n);
  }
}

Tensor Tape::ParamGrad(const Parameter& p) const {
  auto it = params_.find(&p);
  if (it == params_.end()) return Tensor(p.value.shape());
  return it->second.grad();
}

Var Bind(Tape* tape, const Parameter& p) {
  if (tape == nullptr) return Var::Constant(p.value);
  return tape->Param(p);
}

uint64_t ParameterChecksum(std::span<const Parameter* const> params) {
  uint64_t h = 0x84222325CBF29CE4ull;
  for (const Parameter* p : params) {
    h = MixBits(h ^ HashString(p->name));
    for (Real v : p->value.data()) {
      uint32_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      h = (h ^ bits) * 0x100000001B3ull;
    }
  }
  return MixBits(h);
}

}  // namespace fgdm
