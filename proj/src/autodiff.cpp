// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/autodiff.hpp"

#include "newsrec/error.hpp"

namespace newsrec {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Tape::Tape(const ParameterStore* params, std::uint64_t seed, bool training)
    : params_(params), rng_(seed), training_(training) {
  if (params_) param_nodes_.assign(params_->size(), -1);
}

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  auto id = static_cast<std::uint32_t>(nodes_.size());
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return Var(this, id);
}

Var Tape::param(std::size_t index) {
  if (!params_ || index >= params_->size()) {
    throw IndexError("tape has no parameter " + std::to_string(index));
  }
  if (param_nodes_[index] >= 0) return Var(this, static_cast<std::uint32_t>(param_nodes_[index]));
  const auto& p = (*params_)[index];
  Var v = leaf(p.value, p.trainable);
  nodes_[v.id()].param_index = static_cast<std::int64_t>(index);
  param_nodes_[index] = v.id();
  return v;
}

Var Tape::param(std::string_view name) {
  if (!params_) throw IndexError("tape has no parameter store");
  return param(params_->index(name));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  bool needs = false;
  std::vector<std::uint32_t> ids;
  ids.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.tape() != this) throw ContractError("op mixes variables from different tapes");
    ids.push_back(in.id());
    needs = needs || nodes_[in.id()].requires_grad;
  }
  auto id = static_cast<std::uint32_t>(nodes_.size());
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) {
    n.inputs = std::move(ids);
    n.backward = std::move(backward);
  }
  return Var(this, id);
}

void Tape::backward(Var loss) {
  if (backward_done_) throw ContractError("backward called twice on the same tape");
  if (loss.tape() != this) throw ContractError("loss does not belong to this tape");
  if (loss.value().size() != 1) {
    throw DimensionError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  }
  backward_done_ = true;
  Node& root = nodes_[loss.id()];
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.shape(), 1.0);
  std::vector<Tensor*> grad_in;
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    grad_in.assign(n.inputs.size(), nullptr);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      Node& in = nodes_[n.inputs[k]];
      if (!in.requires_grad) continue;
      if (in.grad.empty() && in.value.size() > 0) in.grad = Tensor(in.value.shape());
      if (in.grad.shape() != in.value.shape()) in.grad = Tensor(in.value.shape());
      grad_in[k] = &in.grad;
    }
    n.backward(n.value, n.grad, grad_in);
    // Interior gradients are no longer needed once propagated.
    if (n.param_index < 0) n.grad = Tensor();
  }
}

GradientSet Tape::parameter_gradients() const {
  if (!params_) throw ContractError("tape has no parameter store");
  if (!backward_done_) throw ContractError("parameter_gradients before backward");
  GradientSet out(*params_);
  for (std::size_t i = 0; i < param_nodes_.size(); ++i) {
    if (param_nodes_[i] < 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(param_nodes_[i])];
    if (n.requires_grad && !n.grad.empty()) out[i] = n.grad;
  }
  return out;
}

Tensor Tape::grad(Var v) const {
  if (!backward_done_) throw ContractError("grad requested before backward");
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

}  // namespace newsrec
