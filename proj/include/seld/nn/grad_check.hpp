// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "seld/error.hpp"
#include "seld/random.hpp"

namespace seld::nn {

struct GradCheckOptions {
  double rel_step = 1e-5;       // h = rel_step * max(1, |x|)
  double denom_floor = 1e-6;    // relative error denominator never drops below this
  std::size_t max_samples = 0;  // 0 checks every coordinate
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares `analytic` against central finite differences of `loss` taken
/// by perturbing `x` in place. `x` is restored before returning.
inline GradCheckReport check_gradient(const std::function<double()>& loss, std::span<double> x,
                                      std::span<const double> analytic,
                                      const GradCheckOptions& opts = {}) {
  if (x.size() != analytic.size()) throw ShapeError("grad check: gradient length mismatch");
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (opts.max_samples != 0 && opts.max_samples < idx.size()) {
    Rng rng(opts.seed);
    for (std::size_t i = 0; i < opts.max_samples; ++i)
      std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    idx.resize(opts.max_samples);
  }
  GradCheckReport report;
  for (std::size_t i : idx) {
    const double orig = x[i];
    const double h = opts.rel_step * std::max(1.0, std::abs(orig));
    x[i] = orig + h;
    const double up = loss();
    x[i] = orig - h;
    const double down = loss();
    x[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double abs_err = std::abs(numeric - analytic[i]);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), opts.denom_floor});
    const double rel = abs_err / denom;
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  return report;
}

}  // namespace seld::nn
