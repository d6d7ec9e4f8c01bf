// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "newsrec/autodiff.hpp"

namespace newsrec {

/// Builds the scalar loss of a model on a fresh tape bound to the store.
using LossFn = std::function<Var(Tape&)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Entries checked per parameter; 0 checks every entry. Sampled entries
  /// are chosen with a seeded RNG.
  std::size_t max_entries_per_param = 0;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double denominator_floor = 1e-6;
  std::uint64_t seed = 0;
  /// When the two probes of an entry land on different pieces of a
  /// piecewise op (a ReLU kink), the step is divided by 10 up to this many
  /// times; entries that still straddle a kink are skipped and counted.
  int kink_retries = 3;
};

struct ParamCheck {
  std::string name;
  std::size_t entries_checked = 0;
  std::size_t kinks_skipped = 0;
  double max_rel_error = 0.0;
  bool flagged = false;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  std::size_t kinks_skipped = 0;
  bool passed() const;
};

/// Central finite differences against the tape's reverse pass for every
/// trainable parameter. Throws ContractError if two forward passes at the
/// same parameters disagree.
GradCheckReport gradient_check(ParameterStore& store, const LossFn& loss_fn, double tolerance,
                               const GradCheckOptions& options = {});

}  // namespace newsrec
