// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "seld/config.hpp"
#include "seld/error.hpp"
#include "seld/nn/layers.hpp"
#include "seld/prediction.hpp"
#include "seld/random.hpp"
#include "seld/tensor.hpp"

namespace seld {

using nn::Buffer;
using nn::Mode;
using nn::Param;

/// Per-frame network outputs for a batch: sed (N, T, n_sed) and doa (N, T, 3*n_sed).
template <typename T>
struct BatchOutput {
  Tensor<T> sed;
  Tensor<T> doa;
};

/// Output shape of each intermediate stage from the latest forward pass.
struct TraceEntry {
  std::string name;
  Shape shape;
  std::size_t time_axis = 0;
};
using ShapeTrace = std::vector<TraceEntry>;

namespace detail {

// (N, C, T, F) -> (N, C*F, T) with feature index c*F + f.
template <typename T>
Tensor<T> fold_bins_into_channels(const Tensor<T>& y) {
  const std::size_t n = y.dim(0), c = y.dim(1), frames = y.dim(2), bins = y.dim(3);
  Tensor<T> out({n, c * bins, frames});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t f = 0; f < bins; ++f)
          out(i, ch * bins + f, t) = y(i, ch, t, f);
  return out;
}

template <typename T>
Tensor<T> unfold_channels_into_bins(const Tensor<T>& g, std::size_t channels, std::size_t bins) {
  const std::size_t n = g.dim(0), frames = g.dim(2);
  Tensor<T> out({n, channels, frames, bins});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < channels; ++ch)
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t f = 0; f < bins; ++f)
          out(i, ch, t, f) = g(i, ch * bins + f, t);
  return out;
}

// Swaps the last two axes of a rank-3 tensor.
template <typename T>
Tensor<T> swap_last_axes(const Tensor<T>& x) {
  const std::size_t n = x.dim(0), a = x.dim(1), b = x.dim(2);
  Tensor<T> out({n, b, a});
  for (std::size_t i = 0; i < n; ++i)
    as_matrix(out.data() + i * a * b, b, a) = as_matrix(x.data() + i * a * b, a, b).transpose();
  return out;
}

}  // namespace detail

/// Three stages of conv2d(3x3) -> batch norm -> ReLU -> frequency max-pool.
/// Maps (N, C_feat, T, F) to (N, conv_filters * F_pooled, T).
template <typename T>
class FrontEnd {
 public:
  explicit FrontEnd(const ModelConfig& cfg) : filters_(cfg.conv_filters) {
    std::size_t in = cfg.n_feature_channels;
    for (std::size_t i = 0; i < cfg.pool_schedule.size(); ++i) {
      const std::string name = "frontend." + std::to_string(i);
      stages_.push_back(Stage{nn::Conv2d<T>(name + ".conv", in, filters_),
                              nn::BatchNorm<T>(name + ".bn", filters_), nn::Relu<T>(),
                              nn::MaxPoolFreq<T>(cfg.pool_schedule[i])});
      in = filters_;
    }
  }

  void init(Rng& rng) {
    for (auto& s : stages_) s.conv.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, ShapeTrace* trace = nullptr) {
    Tensor<T> h = x;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      auto& s = stages_[i];
      h = s.pool.forward(s.relu.forward(s.bn.forward(s.conv.forward(h, mode), mode), mode), mode);
      if (trace) trace->push_back({"frontend." + std::to_string(i), h.shape(), 2});
    }
    pooled_bins_ = h.dim(3);
    return detail::fold_bins_into_channels(h);
  }

  /// With need_input_grad false the first conv skips its input gradient and
  /// an empty tensor is returned.
  Tensor<T> backward(const Tensor<T>& g, bool need_input_grad = true) {
    stages_.front().conv.set_input_grad(need_input_grad);
    Tensor<T> h = detail::unfold_channels_into_bins(g, filters_, pooled_bins_);
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it)
      h = it->conv.backward(it->bn.backward(it->relu.backward(it->pool.backward(h))));
    return h;
  }

  void parameters(std::vector<Param<T>*>& out) {
    for (auto& s : stages_) {
      s.conv.parameters(out);
      s.bn.parameters(out);
    }
  }

  void buffers(std::vector<Buffer<T>>& out) {
    for (auto& s : stages_) s.bn.buffers(out);
  }

 private:
  struct Stage {
    nn::Conv2d<T> conv;
    nn::BatchNorm<T> bn;
    nn::Relu<T> relu;
    nn::MaxPoolFreq<T> pool;
  };
  std::size_t filters_;
  std::size_t pooled_bins_ = 0;
  std::vector<Stage> stages_;
};

/// Dilated non-causal conv -> batch norm -> tanh*sigmoid gate -> spatial
/// dropout -> 1x1 conv. The 1x1 output is the skip branch; adding the block
/// input gives the residual branch.
template <typename T>
class ResBlock {
 public:
  ResBlock(const std::string& name, std::size_t channels, std::size_t dilation, double dropout)
      : conv(name + ".dilated", channels, channels, 3, dilation),
        bn(name + ".bn", channels),
        dropout(dropout),
        pointwise(name + ".pointwise", channels, channels, 1, 1),
        channels_(channels) {}

  void init(Rng& rng) {
    conv.init(rng);
    pointwise.init(rng);
  }

  std::size_t dilation() const { return conv.dilation(); }

  struct Output {
    Tensor<T> residual;
    Tensor<T> skip;
  };

  Output forward(const Tensor<T>& x, Mode mode) {
    expect_rank(x.shape(), 3, "resblock input");
    if (x.dim(1) != channels_) throw ShapeError("resblock: channel count mismatch");
    Tensor<T> s = pointwise.forward(
        dropout.forward(gate.forward(bn.forward(conv.forward(x, mode), mode), mode), mode), mode);
    Tensor<T> r = s;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += x[i];
    return {std::move(r), std::move(s)};
  }

  Tensor<T> backward(const Tensor<T>& g_residual, const Tensor<T>& g_skip) {
    Tensor<T> g = g_skip;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += g_residual[i];
    Tensor<T> gx =
        conv.backward(bn.backward(gate.backward(dropout.backward(pointwise.backward(g)))));
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g_residual[i];
    return gx;
  }

  void parameters(std::vector<Param<T>*>& out) {
    conv.parameters(out);
    bn.parameters(out);
    pointwise.parameters(out);
  }

  void buffers(std::vector<Buffer<T>>& out) { bn.buffers(out); }

  nn::Conv1d<T> conv;
  nn::BatchNorm<T> bn;
  nn::GatedActivation<T> gate;
  nn::SpatialDropout<T> dropout;
  nn::Conv1d<T> pointwise;

 private:
  std::size_t channels_;
};

/// Temporal block of SELD-TCN: 1x1 lift to tcn_filters, ResBlocks with
/// dilations 1, 2, 4, ..., ReLU over the summed skips, then two 1x1 convs
/// (ReLU between them). (N, D, T) -> (N, tcn_out_filters, T).
template <typename T>
class TcnStack {
 public:
  TcnStack(const ModelConfig& cfg, std::size_t in_features)
      : input_proj("tcn.input_proj", in_features, cfg.tcn_filters),
        head1("tcn.out.0", cfg.tcn_filters, cfg.tcn_out_filters),
        head2("tcn.out.1", cfg.tcn_out_filters, cfg.tcn_out_filters) {
    for (std::size_t b = 0; b < cfg.tcn_blocks; ++b)
      blocks.emplace_back("tcn.block." + std::to_string(b), cfg.tcn_filters, cfg.dilation(b),
                          cfg.dropout_rate);
  }

  void init(Rng& rng) {
    input_proj.init(rng);
    for (auto& b : blocks) b.init(rng);
    head1.init(rng);
    head2.init(rng);
  }

  void reseed_dropout(std::uint64_t seed) {
    for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].dropout.reseed(mix_seed(seed, b));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, ShapeTrace* trace = nullptr) {
    Tensor<T> h = input_proj.forward(x, mode);
    if (trace) trace->push_back({"tcn.input_proj", h.shape(), 2});
    Tensor<T> skip_sum(h.shape());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      auto out = blocks[b].forward(h, mode);
      for (std::size_t i = 0; i < skip_sum.size(); ++i) skip_sum[i] += out.skip[i];
      h = std::move(out.residual);
      if (trace) trace->push_back({"tcn.block." + std::to_string(b), h.shape(), 2});
    }
    Tensor<T> y =
        head2.forward(head1_relu.forward(head1.forward(skip_relu.forward(skip_sum, mode), mode), mode), mode);
    if (trace) trace->push_back({"tcn.out", y.shape(), 2});
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) {
    const Tensor<T> g_skip = skip_relu.backward(head1.backward(head1_relu.backward(head2.backward(g))));
    Tensor<T> g_res(g_skip.shape());
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g_res = it->backward(g_res, g_skip);
    return input_proj.backward(g_res);
  }

  void parameters(std::vector<Param<T>*>& out) {
    input_proj.parameters(out);
    for (auto& b : blocks) b.parameters(out);
    head1.parameters(out);
    head2.parameters(out);
  }

  void buffers(std::vector<Buffer<T>>& out) {
    for (auto& b : blocks) b.buffers(out);
  }

  nn::Conv1d<T> input_proj;
  std::vector<ResBlock<T>> blocks;
  nn::Relu<T> skip_relu;
  nn::Conv1d<T> head1;
  nn::Relu<T> head1_relu;
  nn::Conv1d<T> head2;
};

/// The two fully-connected branches. The hidden layer of each branch is
/// linear; SED ends in a sigmoid, DOA in a tanh. Input (N, T, D).
template <typename T>
class OutputHeads {
 public:
  OutputHeads(const ModelConfig& cfg, std::size_t in_features)
      : sed_hidden("sed.fc", in_features, cfg.fc_units),
        sed_out("sed.out", cfg.fc_units, cfg.n_sed),
        doa_hidden("doa.fc", in_features, cfg.fc_units),
        doa_out("doa.out", cfg.fc_units, 3 * cfg.n_sed),
        in_(in_features) {}

  void init(Rng& rng) {
    sed_hidden.init(rng);
    sed_out.init(rng);
    doa_hidden.init(rng);
    doa_out.init(rng);
  }

  BatchOutput<T> forward(const Tensor<T>& x, Mode mode) {
    expect_rank(x.shape(), 3, "head input");
    if (x.dim(2) != in_) throw ShapeError("head: feature count mismatch");
    n_ = x.dim(0);
    frames_ = x.dim(1);
    const Tensor<T> flat = x.reshaped({n_ * frames_, in_});
    Tensor<T> sed = sed_act.forward(sed_out.forward(sed_hidden.forward(flat, mode), mode), mode);
    Tensor<T> doa = doa_act.forward(doa_out.forward(doa_hidden.forward(flat, mode), mode), mode);
    sed.reshape({n_, frames_, sed.dim(1)});
    doa.reshape({n_, frames_, doa.dim(1)});
    return {std::move(sed), std::move(doa)};
  }

  Tensor<T> backward(const Tensor<T>& g_sed, const Tensor<T>& g_doa) {
    const std::size_t rows = n_ * frames_;
    Tensor<T> gx = sed_hidden.backward(
        sed_out.backward(sed_act.backward(g_sed.reshaped({rows, g_sed.size() / rows}))));
    const Tensor<T> gd = doa_hidden.backward(
        doa_out.backward(doa_act.backward(g_doa.reshaped({rows, g_doa.size() / rows}))));
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gd[i];
    gx.reshape({n_, frames_, in_});
    return gx;
  }

  void parameters(std::vector<Param<T>*>& out) {
    sed_hidden.parameters(out);
    sed_out.parameters(out);
    doa_hidden.parameters(out);
    doa_out.parameters(out);
  }

  nn::Dense<T> sed_hidden;
  nn::Dense<T> sed_out;
  nn::Sigmoid<T> sed_act;
  nn::Dense<T> doa_hidden;
  nn::Dense<T> doa_out;
  nn::Tanh<T> doa_act;

 private:
  std::size_t in_;
  std::size_t n_ = 0, frames_ = 0;
};

/// Common interface of both architectures.
template <typename T>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  virtual ModelKind kind() const = 0;

  /// Features (N, C_feat, T, F) -> per-frame outputs with T preserved.
  virtual BatchOutput<T> forward(const Tensor<T>& features, Mode mode) = 0;

  virtual void collect_parameters(std::vector<Param<T>*>& out) = 0;
  virtual void collect_buffers(std::vector<Buffer<T>>& out) = 0;

  const ModelConfig& config() const { return cfg_; }

  /// Intermediate output shapes of the latest forward pass.
  const ShapeTrace& trace() const { return trace_; }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    collect_parameters(out);
    return out;
  }

  std::vector<Buffer<T>> buffers() {
    std::vector<Buffer<T>> out;
    collect_buffers(out);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// Runs one train-mode pass so every batch-norm layer holds running
  /// statistics; parameters are untouched.
  void calibrate(const Tensor<T>& features) { forward(features, Mode::train); }

  /// Unbatched inference on a (C_feat, T, F) feature array.
  Prediction<T> predict(const Tensor<T>& features) {
    expect_rank(features.shape(), 3, "features");
    if (features.dim(0) != cfg_.n_feature_channels)
      throw ShapeError("features: expected " + std::to_string(cfg_.n_feature_channels) +
                       " feature channels, got " + std::to_string(features.dim(0)));
    if (features.dim(2) != cfg_.n_bins)
      throw ShapeError("features: expected " + std::to_string(cfg_.n_bins) + " bins, got " +
                       std::to_string(features.dim(2)));
    auto out = forward(features.reshaped({1, features.dim(0), features.dim(1), features.dim(2)}),
                       Mode::infer);
    out.sed.reshape({out.sed.dim(1), out.sed.dim(2)});
    out.doa.reshape({out.doa.dim(1), out.doa.dim(2)});
    return {std::move(out.sed), std::move(out.doa)};
  }

 protected:
  void check_input(const Tensor<T>& x) const {
    expect_rank(x.shape(), 4, "model input");
    if (x.dim(1) != cfg_.n_feature_channels) throw ShapeError("model input: feature channel mismatch");
    if (x.dim(3) != cfg_.n_bins)
      throw ShapeError("model input: expected " + std::to_string(cfg_.n_bins) + " bins, got " +
                       std::to_string(x.dim(3)));
  }

  ModelConfig cfg_;
  ShapeTrace trace_;
};

template <typename T>
class SeldTcn final : public Model<T> {
 public:
  SeldTcn(const ModelConfig& cfg, std::uint64_t seed)
      : Model<T>(cfg),
        frontend(this->cfg_),
        tcn(this->cfg_, this->cfg_.frontend_features()),
        heads(this->cfg_, this->cfg_.tcn_out_filters) {
    Rng rng(seed);
    frontend.init(rng);
    tcn.init(rng);
    heads.init(rng);
    tcn.reseed_dropout(mix_seed(seed, 1000));
  }

  ModelKind kind() const override { return ModelKind::seldtcn; }

  BatchOutput<T> forward(const Tensor<T>& x, Mode mode) override {
    this->check_input(x);
    this->trace_.clear();
    const Tensor<T> temporal = tcn.forward(frontend.forward(x, mode, &this->trace_), mode, &this->trace_);
    return heads.forward(detail::swap_last_axes(temporal), mode);
  }

  /// Back-propagates loss gradients w.r.t. the sed/doa outputs of the last
  /// train-mode forward, accumulating into every parameter's grad.
  Tensor<T> backward(const Tensor<T>& g_sed, const Tensor<T>& g_doa, bool need_input_grad = true) {
    const Tensor<T> g = detail::swap_last_axes(heads.backward(g_sed, g_doa));
    return frontend.backward(tcn.backward(g), need_input_grad);
  }

  void reseed_dropout(std::uint64_t seed) { tcn.reseed_dropout(seed); }

  void collect_parameters(std::vector<Param<T>*>& out) override {
    frontend.parameters(out);
    tcn.parameters(out);
    heads.parameters(out);
  }

  void collect_buffers(std::vector<Buffer<T>>& out) override {
    frontend.buffers(out);
    tcn.buffers(out);
  }

  FrontEnd<T> frontend;
  TcnStack<T> tcn;
  OutputHeads<T> heads;
};

/// Baseline with two bidirectional GRU layers as the temporal block.
/// Inference only.
template <typename T>
class SeldNet final : public Model<T> {
 public:
  SeldNet(const ModelConfig& cfg, std::uint64_t seed)
      : Model<T>(cfg),
        frontend(this->cfg_),
        gru1("gru.0", this->cfg_.frontend_features(), this->cfg_.rnn_hidden),
        gru2("gru.1", 2 * this->cfg_.rnn_hidden, this->cfg_.rnn_hidden),
        heads(this->cfg_, 2 * this->cfg_.rnn_hidden) {
    Rng rng(seed);
    frontend.init(rng);
    gru1.init(rng);
    gru2.init(rng);
    heads.init(rng);
  }

  ModelKind kind() const override { return ModelKind::seldnet; }

  BatchOutput<T> forward(const Tensor<T>& x, Mode mode) override {
    this->check_input(x);
    this->trace_.clear();
    const Tensor<T> seq = detail::swap_last_axes(frontend.forward(x, mode, &this->trace_));
    Tensor<T> h1 = gru1.forward(seq);
    this->trace_.push_back({"gru.0", h1.shape(), 1});
    Tensor<T> h2 = gru2.forward(h1);
    this->trace_.push_back({"gru.1", h2.shape(), 1});
    return heads.forward(h2, mode);
  }

  void collect_parameters(std::vector<Param<T>*>& out) override {
    frontend.parameters(out);
    gru1.parameters(out);
    gru2.parameters(out);
    heads.parameters(out);
  }

  void collect_buffers(std::vector<Buffer<T>>& out) override { frontend.buffers(out); }

  FrontEnd<T> frontend;
  nn::BiGru<T> gru1;
  nn::BiGru<T> gru2;
  OutputHeads<T> heads;
};

template <typename T = float>
std::unique_ptr<Model<T>> build_model(const ModelConfig& cfg, ModelKind kind, std::uint64_t seed) {
  if (kind == ModelKind::seldtcn) return std::make_unique<SeldTcn<T>>(cfg, seed);
  return std::make_unique<SeldNet<T>>(cfg, seed);
}

/// Receptive field in frames of the TCN stack: 1 + 2 * (kernel/2) * sum(dilations).
inline std::size_t tcn_receptive_field(const ModelConfig& cfg) {
  std::size_t sum = 0;
  for (std::size_t b = 0; b < cfg.tcn_blocks; ++b) sum += cfg.dilation(b);
  return 1 + 2 * sum;
}

// ---------------------------------------------------------------------------
// Loss

struct LossValue {
  double total = 0.0;
  double bce = 0.0;
  double mse = 0.0;
};

inline constexpr double kProbClip = 1e-7;

/// Mean binary cross-entropy on SED plus loss_weight_doa times mean squared
/// error on DOA. When grad pointers are given they receive dL/d(output) for
/// sed and doa respectively (shaped like the outputs).
template <typename T>
LossValue seld_loss(const Tensor<T>& sed, const Tensor<T>& doa, const Tensor<T>& target_sed,
                    const Tensor<T>& target_doa, double loss_weight_doa,
                    Tensor<T>* grad_sed = nullptr, Tensor<T>* grad_doa = nullptr) {
  expect_shape(target_sed.shape(), sed.shape(), "sed target");
  expect_shape(target_doa.shape(), doa.shape(), "doa target");
  if (doa.size() != 3 * sed.size()) throw ShapeError("doa must hold three values per sed class");
  LossValue out;
  const double n_sed = static_cast<double>(sed.size());
  const double n_doa = static_cast<double>(doa.size());
  if (grad_sed) *grad_sed = Tensor<T>(sed.shape());
  if (grad_doa) *grad_doa = Tensor<T>(doa.shape());
  for (std::size_t i = 0; i < sed.size(); ++i) {
    const double raw = sed[i];
    const double p = std::clamp(raw, kProbClip, 1.0 - kProbClip);
    const double y = target_sed[i];
    out.bce -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    if (grad_sed && raw == p) (*grad_sed)[i] = static_cast<T>((p - y) / (p * (1.0 - p)) / n_sed);
  }
  out.bce /= n_sed;
  for (std::size_t i = 0; i < doa.size(); ++i) {
    const double e = static_cast<double>(doa[i]) - target_doa[i];
    out.mse += e * e;
    if (grad_doa) (*grad_doa)[i] = static_cast<T>(loss_weight_doa * 2.0 * e / n_doa);
  }
  out.mse /= n_doa;
  out.total = out.bce + loss_weight_doa * out.mse;
  return out;
}

// ---------------------------------------------------------------------------
// Complexity counters (closed forms, independent of any built model)

struct Complexity {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

namespace count {

inline std::uint64_t conv2d_params(std::uint64_t in, std::uint64_t out) { return out * in * 9 + out; }
inline std::uint64_t conv1d_params(std::uint64_t in, std::uint64_t out, std::uint64_t k) {
  return out * in * k + out;
}
inline std::uint64_t dense_params(std::uint64_t in, std::uint64_t out) { return in * out + out; }
inline std::uint64_t batchnorm_params(std::uint64_t channels) { return 2 * channels; }
/// Both directions, one bias vector per gate.
inline std::uint64_t bigru_params(std::uint64_t in, std::uint64_t hidden) {
  return 2 * (3 * hidden * (in + hidden) + 3 * hidden);
}

inline std::uint64_t conv2d_macs(std::uint64_t in, std::uint64_t out, std::uint64_t frames,
                                 std::uint64_t bins) {
  return out * in * 9 * frames * bins;
}
inline std::uint64_t conv1d_macs(std::uint64_t in, std::uint64_t out, std::uint64_t k,
                                 std::uint64_t frames) {
  return out * in * k * frames;
}
inline std::uint64_t dense_macs(std::uint64_t in, std::uint64_t out, std::uint64_t frames) {
  return in * out * frames;
}
inline std::uint64_t bigru_macs(std::uint64_t in, std::uint64_t hidden, std::uint64_t frames) {
  return 2 * 3 * hidden * (in + hidden) * frames;
}

}  // namespace count

/// Parameter and MAC totals for `frames` input frames. Pooling, batch norm
/// and activations contribute no MACs.
inline Complexity complexity(const ModelConfig& cfg, ModelKind kind, std::uint64_t frames) {
  cfg.validate();
  Complexity c;
  std::uint64_t in = cfg.n_feature_channels, bins = cfg.n_bins;
  for (auto pool : cfg.pool_schedule) {
    c.params += count::conv2d_params(in, cfg.conv_filters) + count::batchnorm_params(cfg.conv_filters);
    c.macs += count::conv2d_macs(in, cfg.conv_filters, frames, bins);
    in = cfg.conv_filters;
    bins /= pool;
  }
  const std::uint64_t features = cfg.frontend_features();
  std::uint64_t head_in = 0;
  if (kind == ModelKind::seldtcn) {
    const std::uint64_t f = cfg.tcn_filters, o = cfg.tcn_out_filters;
    c.params += count::conv1d_params(features, f, 1);
    c.macs += count::conv1d_macs(features, f, 1, frames);
    for (std::size_t b = 0; b < cfg.tcn_blocks; ++b) {
      c.params += count::conv1d_params(f, f, 3) + count::batchnorm_params(f) +
                  count::conv1d_params(f, f, 1);
      c.macs += count::conv1d_macs(f, f, 3, frames) + count::conv1d_macs(f, f, 1, frames);
    }
    c.params += count::conv1d_params(f, o, 1) + count::conv1d_params(o, o, 1);
    c.macs += count::conv1d_macs(f, o, 1, frames) + count::conv1d_macs(o, o, 1, frames);
    head_in = o;
  } else {
    const std::uint64_t h = cfg.rnn_hidden;
    c.params += count::bigru_params(features, h) + count::bigru_params(2 * h, h);
    c.macs += count::bigru_macs(features, h, frames) + count::bigru_macs(2 * h, h, frames);
    head_in = 2 * h;
  }
  for (std::uint64_t out : {cfg.n_sed, 3 * cfg.n_sed}) {
    c.params += count::dense_params(head_in, cfg.fc_units) + count::dense_params(cfg.fc_units, out);
    c.macs += count::dense_macs(head_in, cfg.fc_units, frames) +
              count::dense_macs(cfg.fc_units, out, frames);
  }
  return c;
}

inline std::uint64_t count_params(const ModelConfig& cfg, ModelKind kind) {
  return complexity(cfg, kind, 1).params;
}

inline std::uint64_t count_macs(const ModelConfig& cfg, ModelKind kind, std::uint64_t frames) {
  return complexity(cfg, kind, frames).macs;
}

}  // namespace seld
