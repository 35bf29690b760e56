// SPDX-License-Identifier: Apache-2.0
#pragma once

// Unbatched, stateless forms of the layer forward passes.

#include <cstdint>

#include "seld/nn/layers.hpp"

namespace seld::nn {

/// (C_in, T, F) x (C_out, C_in, 3, 3) -> (C_out, T, F).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  expect_rank(input.shape(), 3, "conv2d input");
  expect_rank(weights.shape(), 4, "conv2d weights");
  if (weights.dim(2) != 3 || weights.dim(3) != 3) throw ShapeError("conv2d: kernel must be 3x3");
  Conv2d<T> layer("conv2d", weights.dim(1), weights.dim(0));
  expect_shape(weights.shape(), layer.weight.value.shape(), "conv2d weights");
  expect_shape(bias.shape(), layer.bias.value.shape(), "conv2d bias");
  layer.weight.value = weights;
  layer.bias.value = bias;
  Tensor<T> out = layer.forward(input.reshaped({1, input.dim(0), input.dim(1), input.dim(2)}),
                                Mode::infer);
  out.reshape({weights.dim(0), input.dim(1), input.dim(2)});
  return out;
}

/// (C, T, F) -> (C, T, F / width).
template <typename T>
Tensor<T> maxpool_freq(const Tensor<T>& input, std::size_t width) {
  expect_rank(input.shape(), 3, "maxpool input");
  MaxPoolFreq<T> pool(width);
  Tensor<T> out =
      pool.forward(input.reshaped({1, input.dim(0), input.dim(1), input.dim(2)}), Mode::infer);
  out.reshape({input.dim(0), input.dim(1), input.dim(2) / width});
  return out;
}

/// (C_in, T) x (C_out, C_in, 3) -> (C_out, T); output[o, t] sums
/// input[c, t + k*d] * weights[o, c, k + 1] over k in {-1, 0, 1}.
template <typename T>
Tensor<T> dilated_conv1d_noncausal(const Tensor<T>& input, const Tensor<T>& weights,
                                   const Tensor<T>& bias, std::size_t dilation) {
  expect_rank(input.shape(), 2, "dilated conv input");
  expect_rank(weights.shape(), 3, "dilated conv weights");
  if (weights.dim(2) != 3) throw ShapeError("dilated conv: kernel size must be 3");
  Conv1d<T> layer("conv1d", weights.dim(1), weights.dim(0), 3, dilation);
  expect_shape(weights.shape(), layer.weight.value.shape(), "dilated conv weights");
  expect_shape(bias.shape(), layer.bias.value.shape(), "dilated conv bias");
  layer.weight.value = weights;
  layer.bias.value = bias;
  Tensor<T> out = layer.forward(input.reshaped({1, input.dim(0), input.dim(1)}), Mode::infer);
  out.reshape({weights.dim(0), input.dim(1)});
  return out;
}

template <typename T>
Tensor<T> gated_activation(const Tensor<T>& z) {
  GatedActivation<T> g;
  return g.forward(z, Mode::infer);
}

/// (C, T) channel dropout; identity in infer mode.
template <typename T>
Tensor<T> spatial_dropout(const Tensor<T>& input, double rate, Mode mode, std::uint64_t seed) {
  expect_rank(input.shape(), 2, "spatial dropout input");
  SpatialDropout<T> d(rate, seed);
  Tensor<T> out = d.forward(input.reshaped({1, input.dim(0), input.dim(1)}), mode);
  out.reshape(input.shape());
  return out;
}

/// (T, I) x (I, O) + b -> (T, O).
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  expect_rank(weights.shape(), 2, "dense weights");
  Dense<T> layer("dense", weights.dim(0), weights.dim(1));
  expect_shape(bias.shape(), layer.bias.value.shape(), "dense bias");
  layer.weight.value = weights;
  layer.bias.value = bias;
  return layer.forward(input, Mode::infer);
}

/// (T, I) -> (T, 2H).
template <typename T>
Tensor<T> bigru_forward(const Tensor<T>& input, const BiGru<T>& gru) {
  expect_rank(input.shape(), 2, "gru input");
  Tensor<T> out = gru.forward(input.reshaped({1, input.dim(0), input.dim(1)}));
  out.reshape({input.dim(0), 2 * gru.hidden()});
  return out;
}

}  // namespace seld::nn
