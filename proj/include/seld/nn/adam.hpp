// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "seld/error.hpp"
#include "seld/nn/layers.hpp"

namespace seld::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameters. Moments are kept in
/// the parameter's precision; the update arithmetic runs in double.
template <typename T>
class Adam {
 public:
  explicit Adam(std::vector<Param<T>*> params, AdamOptions opts = {})
      : params_(std::move(params)), opts_(opts) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  std::uint64_t steps() const { return step_; }
  const AdamOptions& options() const { return opts_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

  /// Applies one update from each parameter's accumulated gradient. Throws
  /// NumericError, leaving every parameter untouched, if any gradient is not
  /// finite.
  void step() {
    for (auto* p : params_) {
      expect_shape(p->grad.shape(), p->value.shape(), "adam gradient");
      if (!p->grad.all_finite())
        throw NumericError("non-finite gradient for parameter '" + p->name + "'");
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(opts_.beta1, t);
    const double c2 = 1.0 - std::pow(opts_.beta2, t);
    for (std::size_t j = 0; j < params_.size(); ++j) {
      auto& p = *params_[j];
      auto& m = m_[j];
      auto& v = v_[j];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        const double mi = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
        const double vi = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        p.value[i] = static_cast<T>(p.value[i] - opts_.lr * (mi / c1) / (std::sqrt(vi / c2) + opts_.eps));
      }
    }
  }

 private:
  std::vector<Param<T>*> params_;
  AdamOptions opts_;
  std::vector<Tensor<T>> m_, v_;
  std::uint64_t step_ = 0;
};

}  // namespace seld::nn
