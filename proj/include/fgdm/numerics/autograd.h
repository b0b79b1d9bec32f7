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

#ifndef FGDM_NUMERICS_AUTOGRAD_H_
#define FGDM_NUMERICS_AUTOGRAD_H_

#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fgdm/numerics/tensor.h"

namespace fgdm {

// A named, persistable weight. Frozen parameters enter a tape as constants.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

class Tape;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's gradient and accumulates into inputs' gradients.
  std::function<void(Node&)> backward;
  const Parameter* param = nullptr;
  // Double-precision value of one-element results from reductions and
  // scalar arithmetic; NaN when not tracked.
  double precise = std::numeric_limits<double>::quiet_NaN();

  bool has_grad() const { return !grad_.empty(); }
  // Zero-initialized on first use.
  std::span<Real> grad_buffer();
  std::span<const Real> grad() const { return grad_; }

 private:
  std::vector<Real> grad_;
};

// Handle to a value that may participate in reverse-mode differentiation.
class Var {
 public:
  Var() = default;
  Var(std::shared_ptr<Node> node, Tape* tape)
      : node_(std::move(node)), tape_(tape) {}

  static Var Constant(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t dim(int axis) const { return node_->value.dim(axis); }
  int rank() const { return node_->value.rank(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tape* tape() const { return tape_; }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  // Value of a one-element Var, using the double-precision shadow when
  // available.
  double scalar() const;

  // Gradient after Tape::Backward; zeros when the loss did not reach it.
  Tensor grad() const;

 private:
  std::shared_ptr<Node> node_;
  Tape* tape_ = nullptr;
};

// Records primitive operations of one forward pass in creation order,
// which is a topological order. Confined to a single thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Leaf(Tensor value, bool requires_grad = true);
  // Binds a parameter once per tape. Frozen parameters become constants.
  Var Param(const Parameter& p);

  // Used by primitives. Returns a constant when no input needs gradients.
  Var Record(Tensor value, std::span<const Var> inputs,
             std::function<void(Node&)> backward);

  void Backward(const Var& loss);

  // Gradient for a bound parameter; zeros if unreachable. Valid after
  // Backward.
  Tensor ParamGrad(const Parameter& p) const;
  const std::vector<const Parameter*>& bound_params() const {
    return param_order_;
  }
  size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
  std::map<const Parameter*, Var> params_;
  std::vector<const Parameter*> param_order_;
  bool backward_done_ = false;
};

// Binds a parameter to the tape if there is one, otherwise as a constant.
Var Bind(Tape* tape, const Parameter& p);

// Deterministic checksum over parameter blobs (names and bits).
uint64_t ParameterChecksum(std::span<const Parameter* const> params);

}  // namespace fgdm

#endif  // FGDM_NUMERICS_AUTOGRAD_H_
