// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "newsrec/params.hpp"
#include "newsrec/tensor.hpp"

namespace newsrec {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid as long as
/// the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Backward rule: given the op's output value and the gradient flowing into
/// it, accumulate into the gradients of its inputs. `grad_in[i]` is null when
/// input i does not require a gradient.
using BackwardFn = std::function<void(const Tensor& out, const Tensor& grad_out,
                                      std::span<Tensor* const> grad_in)>;

/// Ordered record of operations. Nodes are appended as ops execute, so every
/// node's inputs precede it; backward walks the list once in reverse.
class Tape {
 public:
  explicit Tape(const ParameterStore* params = nullptr, std::uint64_t seed = 0,
                bool training = false);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);
  /// Parameter from the bound store; requires a gradient iff trainable.
  /// Repeated calls for the same index return the same node.
  Var param(std::size_t index);
  Var param(std::string_view name);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse pass from a scalar loss. Throws ContractError if called twice.
  void backward(Var loss);
  /// Gradients of the bound store's parameters (zeros where unreached or
  /// frozen). Only valid after backward().
  GradientSet parameter_gradients() const;
  /// Gradient of any node after backward(); zeros if unreached.
  Tensor grad(Var v) const;

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }
  const ParameterStore* params() const { return params_; }
  bool training() const { return training_; }
  std::mt19937_64& rng() { return rng_; }

  /// Piecewise ops fold the branch each element took into this hash, so
  /// two passes with equal signatures lie on the same smooth piece.
  void note_branches(std::uint64_t h) { branch_signature_ = branch_signature_ * 0x100000001b3ULL ^ h; }
  std::uint64_t branch_signature() const { return branch_signature_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    std::int64_t param_index = -1;
  };

  std::deque<Node> nodes_;
  const ParameterStore* params_;
  std::vector<std::int64_t> param_nodes_;
  std::mt19937_64 rng_;
  bool training_;
  bool backward_done_ = false;
  std::uint64_t branch_signature_ = 0xcbf29ce484222325ULL;
};

}  // namespace newsrec
