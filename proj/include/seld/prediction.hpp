// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "seld/tensor.hpp"

namespace seld {

/// Per-frame outputs for one clip: sed (T, N_SED) in [0, 1] and doa
/// (T, 3 * N_SED) in [-1, 1], laid out as (x, y, z) per class.
template <typename T = float>
struct Prediction {
  Tensor<T> sed;
  Tensor<T> doa;

  std::size_t frames() const { return sed.dim(0); }
  std::size_t classes() const { return sed.dim(1); }
};

}  // namespace seld
