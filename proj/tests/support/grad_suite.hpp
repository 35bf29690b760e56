// SPDX-License-Identifier: Apache-2.0
#pragma once

// Finite-difference checks shared by the unit tests and the acceptance binary.
// Each check builds a small random problem in float64, projects the layer
// output onto a random direction r (loss = <r, y>) and compares the
// analytic gradients against central differences.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <vector>

#include "seld/nn/grad_check.hpp"
#include "seld/models.hpp"
#include "seld/nn/layers.hpp"
#include "seld/random.hpp"

namespace seld::testing {

using nn::Mode;
using nn::Param;

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.vec()) v = scale * rng.gaussian();
  return t;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Gradient check of a layer with forward(x, mode) / backward(gy). `before`
/// runs ahead of every forward (used to pin dropout masks).
template <typename Layer>
double layer_grad_error(Layer& layer, Tensor<double> x, std::vector<Param<double>*> params,
                        std::uint64_t seed, const std::function<void()>& before = {},
                        nn::GradCheckOptions opts = {}) {
  Rng rng(mix_seed(seed, 99));
  if (before) before();
  const Tensor<double> probe = layer.forward(x, Mode::train);
  const Tensor<double> r = random_tensor(probe.shape(), rng);
  for (auto* p : params) p->zero_grad();
  if (before) before();
  layer.forward(x, Mode::train);
  const Tensor<double> gx = layer.backward(r);

  auto loss = [&] {
    if (before) before();
    return dot(layer.forward(x, Mode::train), r);
  };
  opts.seed = seed;
  double worst = nn::check_gradient(loss, x.span(), gx.span(), opts).max_rel_error;
  for (auto* p : params) {
    const Tensor<double> analytic = p->grad;
    worst = std::max(worst,
                     nn::check_gradient(loss, p->value.span(), analytic.span(), opts).max_rel_error);
  }
  return worst;
}

inline double conv2d_grad_error(std::uint64_t seed) {
  Rng rng(seed);
  nn::Conv2d<double> conv("c", 2, 3);
  conv.init(rng);
  for (auto& b : conv.bias.value.vec()) b = rng.gaussian();
  std::vector<Param<double>*> ps;
  conv.parameters(ps);
  return layer_grad_error(conv, random_tensor({2, 2, 5, 4}, rng), ps, seed);
}

inline double dilated_conv1d_grad_error(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = std::size_t{1} << rng.below(3);
  nn::Conv1d<double> conv("c", 3, 4, 3, d);
  conv.init(rng);
  for (auto& b : conv.bias.value.vec()) b = rng.gaussian();
  std::vector<Param<double>*> ps;
  conv.parameters(ps);
  return layer_grad_error(conv, random_tensor({2, 3, 9}, rng), ps, seed);
}

inline double batchnorm_grad_error(std::uint64_t seed) {
  Rng rng(seed);
  nn::BatchNorm<double> bn("bn", 3);
  for (auto& g : bn.gamma.value.vec()) g = 0.5 + rng.uniform();
  for (auto& b : bn.beta.value.vec()) b = rng.gaussian();
  std::vector<Param<double>*> ps;
  bn.parameters(ps);
  return layer_grad_error(bn, random_tensor({2, 3, 4, 3}, rng, 2.0), ps, seed);
}

inline double gated_grad_error(std::uint64_t seed) {
  Rng rng(seed);
  nn::GatedActivation<double> g;
  return layer_grad_error(g, random_tensor({2, 3, 7}, rng, 2.0), {}, seed);
}

inline double dense_grad_error(std::uint64_t seed) {
  Rng rng(seed);
  nn::Dense<double> dense("d", 5, 4);
  dense.init(rng);
  for (auto& b : dense.bias.value.vec()) b = rng.gaussian();
  std::vector<Param<double>*> ps;
  dense.parameters(ps);
  return layer_grad_error(dense, random_tensor({6, 5}, rng), ps, seed);
}

inline double resblock_grad_error(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = std::size_t{1} << rng.below(3);
  ResBlock<double> block("r", 4, d, 0.5);
  block.init(rng);
  for (auto& g : block.bn.gamma.value.vec()) g = 0.5 + rng.uniform();
  for (auto& b : block.bn.beta.value.vec()) b = 0.3 * rng.gaussian();
  std::vector<Param<double>*> ps;
  block.parameters(ps);
  Tensor<double> x = random_tensor({2, 4, 10}, rng);
  const Tensor<double> r_res = random_tensor(x.shape(), rng);
  const Tensor<double> r_skip = random_tensor(x.shape(), rng);
  const std::uint64_t mask_seed = mix_seed(seed, 7);

  auto run = [&] {
    block.dropout.reseed(mask_seed);
    return block.forward(x, Mode::train);
  };
  for (auto* p : ps) p->zero_grad();
  run();
  const Tensor<double> gx = block.backward(r_res, r_skip);
  auto loss = [&] {
    const auto out = run();
    return dot(out.residual, r_res) + dot(out.skip, r_skip);
  };
  nn::GradCheckOptions opts;
  opts.seed = seed;
  double worst = nn::check_gradient(loss, x.span(), gx.span(), opts).max_rel_error;
  for (auto* p : ps) {
    const Tensor<double> analytic = p->grad;
    worst = std::max(worst, nn::check_gradient(loss, p->value.span(), analytic.span(), opts).max_rel_error);
  }
  return worst;
}

/// Tiny SELD-TCN with every layer kind present.
inline ModelConfig tiny_tcn_config() {
  ModelConfig cfg;
  cfg.n_sed = 2;
  cfg.n_feature_channels = 2;
  cfg.n_bins = 8;
  cfg.conv_filters = 3;
  cfg.pool_schedule = {2, 2, 2};
  cfg.tcn_filters = 4;
  cfg.tcn_blocks = 2;
  cfg.tcn_out_filters = 3;
  cfg.fc_units = 4;
  cfg.seq_len = 6;
  return cfg;
}

/// Gradient of the full training loss (BCE + weighted MSE) w.r.t. every
/// parameter and the input features.
inline double seldtcn_loss_grad_error(std::uint64_t seed, std::size_t samples_per_tensor = 40) {
  Rng rng(seed);
  ModelConfig cfg = tiny_tcn_config();
  cfg.loss_weight_doa = 0.5 + rng.uniform();
  SeldTcn<double> model(cfg, seed);
  // Zero-initialised biases can sit exactly on a ReLU kink.
  for (auto* p : model.parameters())
    for (auto& v : p->value.vec()) v += 0.1 * rng.gaussian();
  Tensor<double> x = random_tensor({2, cfg.n_feature_channels, cfg.seq_len, cfg.n_bins}, rng);
  Tensor<double> target_sed({2, cfg.seq_len, cfg.n_sed});
  for (auto& v : target_sed.vec()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  const Tensor<double> target_doa = random_tensor({2, cfg.seq_len, 3 * cfg.n_sed}, rng, 0.5);
  const std::uint64_t mask_seed = mix_seed(seed, 11);

  auto run = [&] {
    model.reseed_dropout(mask_seed);
    return model.forward(x, Mode::train);
  };
  model.zero_grad();
  auto out = run();
  Tensor<double> g_sed, g_doa;
  seld_loss(out.sed, out.doa, target_sed, target_doa, cfg.loss_weight_doa, &g_sed, &g_doa);
  const Tensor<double> gx = model.backward(g_sed, g_doa);
  auto loss = [&] {
    const auto o = run();
    return seld_loss(o.sed, o.doa, target_sed, target_doa, cfg.loss_weight_doa).total;
  };
  nn::GradCheckOptions opts;
  opts.seed = seed;
  opts.max_samples = samples_per_tensor;
  double worst = nn::check_gradient(loss, x.span(), gx.span(), opts).max_rel_error;
  for (auto* p : model.parameters()) {
    const Tensor<double> analytic = p->grad;
    worst = std::max(worst, nn::check_gradient(loss, p->value.span(), analytic.span(), opts).max_rel_error);
  }
  return worst;
}

}  // namespace seld::testing
