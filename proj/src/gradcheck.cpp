// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "newsrec/error.hpp"

namespace newsrec {

bool GradCheckReport::passed() const {
  return std::none_of(params.begin(), params.end(), [](const ParamCheck& p) { return p.flagged; });
}

namespace {

struct Probe {
  double loss;
  std::uint64_t branches;
};

Probe evaluate(ParameterStore& store, const LossFn& fn) {
  Tape tape(&store);
  const double loss = fn(tape).value().item();
  return {loss, tape.branch_signature()};
}

}  // namespace

GradCheckReport gradient_check(ParameterStore& store, const LossFn& loss_fn, double tolerance,
                               const GradCheckOptions& options) {
  GradientSet analytic;
  double base = 0.0;
  std::uint64_t base_branches = 0;
  {
    Tape tape(&store);
    Var loss = loss_fn(tape);
    base = loss.value().item();
    base_branches = tape.branch_signature();
    tape.backward(loss);
    analytic = tape.parameter_gradients();
  }
  const Probe again = evaluate(store, loss_fn);
  if (again.loss != base || again.branches != base_branches) {
    throw ContractError("gradient_check: model is not deterministic between forward passes");
  }

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t p = 0; p < store.size(); ++p) {
    if (!store[p].trainable) continue;
    ParamCheck check{store[p].name};
    std::vector<std::size_t> entries(store[p].value.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_param && entries.size() > options.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }
    for (auto i : entries) {
      double& x = store[p].value[i];
      const double saved = x;
      double step = options.step;
      std::optional<double> numeric;
      for (int attempt = 0; attempt <= options.kink_retries; ++attempt, step /= 10.0) {
        x = saved + step;
        const Probe up = evaluate(store, loss_fn);
        x = saved - step;
        const Probe down = evaluate(store, loss_fn);
        x = saved;
        if (up.branches == base_branches && down.branches == base_branches) {
          numeric = (up.loss - down.loss) / (2.0 * step);
          break;
        }
      }
      if (!numeric) {
        ++check.kinks_skipped;
        continue;
      }
      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(*numeric), options.denominator_floor});
      check.max_rel_error = std::max(check.max_rel_error, std::abs(a - *numeric) / denom);
      ++check.entries_checked;
    }
    check.flagged = !(check.max_rel_error < tolerance);
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.kinks_skipped += check.kinks_skipped;
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace newsrec
