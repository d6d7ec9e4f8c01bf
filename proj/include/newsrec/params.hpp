// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "newsrec/tensor.hpp"

namespace newsrec {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Named, ordered collection of model parameters. Indices are stable once
/// assigned and are what tapes and gradient sets refer to.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable = true);
  /// Normal(0, stddev) initialized parameter.
  std::size_t add_normal(std::string name, Shape shape, double stddev, std::mt19937_64& rng);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;
  Parameter& at(std::string_view name) { return params_[index(name)]; }
  const Parameter& at(std::string_view name) const { return params_[index(name)]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Total element count over every parameter, trainable or not.
  std::size_t element_count() const;
  std::size_t trainable_element_count() const;
  void set_trainable_prefix(std::string_view prefix, bool trainable);

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

/// One gradient tensor per parameter of a store, in store order. Entries
/// for frozen or unreached parameters are zero-filled.
class GradientSet {
 public:
  GradientSet() = default;
  explicit GradientSet(const ParameterStore& store);

  std::size_t size() const { return grads_.size(); }
  Tensor& operator[](std::size_t i) { return grads_[i]; }
  const Tensor& operator[](std::size_t i) const { return grads_[i]; }
  void scale(double factor);

 private:
  std::vector<Tensor> grads_;
};

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

AdamState make_adam_state(const ParameterStore& store, AdamConfig config = {});

/// Bias-corrected Adam update of every trainable parameter. Frozen
/// parameters are never written.
void adam_step(ParameterStore& store, const GradientSet& grads, AdamState& state);

}  // namespace newsrec
