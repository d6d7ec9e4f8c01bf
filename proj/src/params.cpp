// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/params.hpp"

#include <cmath>

#include "newsrec/error.hpp"

namespace newsrec {

std::size_t ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (by_name_.count(name)) throw ContractError("duplicate parameter name " + name);
  std::size_t idx = params_.size();
  by_name_.emplace(name, idx);
  params_.push_back(Parameter{std::move(name), std::move(value), trainable});
  return idx;
}

std::size_t ParameterStore::add_normal(std::string name, Shape shape, double stddev,
                                       std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return add(std::move(name), std::move(t));
}

std::size_t ParameterStore::index(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) throw IndexError("unknown parameter " + std::string(name));
  return it->second;
}

bool ParameterStore::contains(std::string_view name) const {
  return by_name_.count(std::string(name)) > 0;
}

std::size_t ParameterStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::size_t ParameterStore::trainable_element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

void ParameterStore::set_trainable_prefix(std::string_view prefix, bool trainable) {
  for (auto& p : params_)
    if (std::string_view(p.name).substr(0, prefix.size()) == prefix) p.trainable = trainable;
}

GradientSet::GradientSet(const ParameterStore& store) {
  grads_.reserve(store.size());
  for (const auto& p : store) grads_.emplace_back(p.value.shape());
}

void GradientSet::scale(double factor) {
  for (auto& g : grads_)
    for (auto& x : g.values()) x *= factor;
}

AdamState make_adam_state(const ParameterStore& store, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const auto& p : store) {
    state.first_moment.emplace_back(p.value.shape());
    state.second_moment.emplace_back(p.value.shape());
  }
  return state;
}

void adam_step(ParameterStore& store, const GradientSet& grads, AdamState& state) {
  if (grads.size() != store.size() || state.first_moment.size() != store.size()) {
    throw DimensionError("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& shape = store[i].value.shape();
    if (grads[i].shape() != shape || state.first_moment[i].shape() != shape ||
        state.second_moment[i].shape() != shape) {
      throw DimensionError("adam_step: shape mismatch for " + store[i].name);
    }
  }
  state.step += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store[i].trainable) continue;
    double* p = store[i].value.data();
    const double* g = grads[i].data();
    double* m = state.first_moment[i].data();
    double* v = state.second_moment[i].data();
    const std::size_t n = store[i].value.size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

}  // namespace newsrec
