// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seld/error.hpp"
#include "seld/random.hpp"
#include "seld/tensor.hpp"

namespace seld::nn {

enum class Mode { train, infer };

/// A trainable array and its accumulated gradient.
template <typename T>
struct Param {
  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}

  void zero_grad() { grad.fill(T{0}); }

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Non-trainable state that still has to be persisted (batch-norm statistics).
template <typename T>
struct Buffer {
  std::string name;
  Tensor<T>* tensor;
  bool* ready = nullptr;  // set once the buffer holds meaningful values
};

template <typename T>
void glorot_uniform(Param<T>& p, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : p.value.vec()) v = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

namespace detail {

// Reductions with a fixed lane layout: the summation order depends only on n,
// never on the address, so identical inputs give identical sums.
inline constexpr std::size_t kLanes = 16;

template <typename T, typename F>
double lane_reduce(std::size_t n, F term) {
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t k = 0; k < kLanes; ++k) acc[k] += term(i + k);
  double s = 0.0;
  for (std::size_t k = 0; k < kLanes; ++k) s += acc[k];
  for (; i < n; ++i) s += term(i);
  return s;
}

template <typename T>
double lane_sum(const T* p, std::size_t n) {
  return lane_reduce<T>(n, [p](std::size_t i) { return p[i]; });
}

template <typename T>
double lane_dot(const T* a, const T* b, std::size_t n) {
  return lane_reduce<T>(n, [a, b](std::size_t i) { return a[i] * b[i]; });
}

template <typename T>
double lane_sq_dev(const T* p, T m, std::size_t n) {
  return lane_reduce<T>(n, [p, m](std::size_t i) { return (p[i] - m) * (p[i] - m); });
}

// Frames [t0, t1) of one sample. Row (c*9 + kt*3 + kf), column
// ((t - t0)*F + f) holds x[c, t+kt-1, f+kf-1], zero outside.
template <typename T>
void im2col_3x3(const T* x, std::size_t channels, std::size_t frames, std::size_t bins, std::size_t t0,
                std::size_t t1, T* cols) {
  const std::size_t plane = frames * bins, width = (t1 - t0) * bins;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* xc = x + c * plane;
    for (std::size_t kt = 0; kt < 3; ++kt) {
      for (std::size_t kf = 0; kf < 3; ++kf) {
        T* row = cols + (c * 9 + kt * 3 + kf) * width;
        for (std::size_t t = t0; t < t1; ++t) {
          T* dst = row + (t - t0) * bins;
          const std::ptrdiff_t ts = static_cast<std::ptrdiff_t>(t + kt) - 1;
          if (ts < 0 || ts >= static_cast<std::ptrdiff_t>(frames)) {
            std::fill(dst, dst + bins, T{0});
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(ts) * bins;
          if (kf == 0) {
            dst[0] = T{0};
            std::copy(src, src + bins - 1, dst + 1);
          } else if (kf == 1) {
            std::copy(src, src + bins, dst);
          } else {
            std::copy(src + 1, src + bins, dst);
            dst[bins - 1] = T{0};
          }
        }
      }
    }
  }
}

// Adjoint of im2col_3x3 for one tile; accumulates into x.
template <typename T>
void col2im_3x3(const T* cols, std::size_t channels, std::size_t frames, std::size_t bins, std::size_t t0,
                std::size_t t1, T* x) {
  const std::size_t plane = frames * bins, width = (t1 - t0) * bins;
  for (std::size_t c = 0; c < channels; ++c) {
    T* xc = x + c * plane;
    for (std::size_t kt = 0; kt < 3; ++kt) {
      for (std::size_t kf = 0; kf < 3; ++kf) {
        const T* row = cols + (c * 9 + kt * 3 + kf) * width;
        for (std::size_t t = t0; t < t1; ++t) {
          const std::ptrdiff_t ts = static_cast<std::ptrdiff_t>(t + kt) - 1;
          if (ts < 0 || ts >= static_cast<std::ptrdiff_t>(frames)) continue;
          const T* src = row + (t - t0) * bins;
          T* dst = xc + static_cast<std::size_t>(ts) * bins;
          if (kf == 0) {
            for (std::size_t f = 1; f < bins; ++f) dst[f - 1] += src[f];
          } else if (kf == 1) {
            for (std::size_t f = 0; f < bins; ++f) dst[f] += src[f];
          } else {
            for (std::size_t f = 0; f + 1 < bins; ++f) dst[f + 1] += src[f];
          }
        }
      }
    }
  }
}

// Frames per im2col tile, sized so one tile of columns stays in cache.
inline std::size_t conv_tile_frames(std::size_t rows, std::size_t bins) {
  constexpr std::size_t kTileFloats = 1 << 17;
  return std::max<std::size_t>(1, kTileFloats / std::max<std::size_t>(1, rows * bins));
}

// Row (c*K + k), column t holds x[c, t + (k - K/2)*d], zero outside.
template <typename T>
void im2col_1d(const T* x, std::size_t channels, std::size_t frames, std::size_t kernel,
               std::size_t dilation, T* cols) {
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(frames);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* xc = x + c * frames;
    for (std::size_t k = 0; k < kernel; ++k) {
      T* row = cols + (c * kernel + k) * frames;
      const std::ptrdiff_t shift = (static_cast<std::ptrdiff_t>(k) - half) *
                                   static_cast<std::ptrdiff_t>(dilation);
      for (std::ptrdiff_t t = 0; t < n; ++t) {
        const std::ptrdiff_t s = t + shift;
        row[t] = (s >= 0 && s < n) ? xc[s] : T{0};
      }
    }
  }
}

template <typename T>
void col2im_1d(const T* cols, std::size_t channels, std::size_t frames, std::size_t kernel,
               std::size_t dilation, T* x) {
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(frames);
  std::fill(x, x + channels * frames, T{0});
  for (std::size_t c = 0; c < channels; ++c) {
    T* xc = x + c * frames;
    for (std::size_t k = 0; k < kernel; ++k) {
      const T* row = cols + (c * kernel + k) * frames;
      const std::ptrdiff_t shift = (static_cast<std::ptrdiff_t>(k) - half) *
                                   static_cast<std::ptrdiff_t>(dilation);
      for (std::ptrdiff_t t = 0; t < n; ++t) {
        const std::ptrdiff_t s = t + shift;
        if (s >= 0 && s < n) xc[s] += row[t];
      }
    }
  }
}

}  // namespace detail

/// 3x3 convolution, stride 1, zero "same" padding, over (N, C, T, F) inputs.
template <typename T>
class Conv2d {
  using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
  using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

 public:
  Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels)
      : weight(name + ".weight", {out_channels, in_channels, 3, 3}),
        bias(name + ".bias", {out_channels}),
        in_(in_channels),
        out_(out_channels) {}

  void init(Rng& rng) {
    glorot_uniform(weight, in_ * 9, out_ * 9, rng);
    bias.value.fill(T{0});
  }

  /// Skipping the input gradient makes backward() return an empty tensor.
  void set_input_grad(bool on) { input_grad_ = on; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    expect_rank(x.shape(), 4, "conv2d input");
    if (x.dim(1) != in_) throw ShapeError("conv2d: input channel count mismatch");
    const std::size_t n = x.dim(0), frames = x.dim(2), bins = x.dim(3), plane = frames * bins;
    const std::size_t rows = in_ * 9, tile = detail::conv_tile_frames(rows, bins);
    Tensor<T> y({n, out_, frames, bins});
    std::vector<T> cols(rows * std::min(tile, frames) * bins);
    const auto w = as_matrix(weight.value.data(), out_, rows);
    const auto b = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.value.data(), out_);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t0 = 0; t0 < frames; t0 += tile) {
        const std::size_t t1 = std::min(frames, t0 + tile), width = (t1 - t0) * bins;
        detail::im2col_3x3(x.data() + i * in_ * plane, in_, frames, bins, t0, t1, cols.data());
        StridedMap out(y.data() + i * out_ * plane + t0 * bins, out_, width, Eigen::OuterStride<>(plane));
        out.noalias() = w * as_matrix(static_cast<const T*>(cols.data()), rows, width);
        out.colwise() += b;
      }
    }
    if (mode == Mode::train) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (input_.empty()) throw UninitializedError("conv2d backward without a train-mode forward");
    const std::size_t n = input_.dim(0), frames = input_.dim(2), bins = input_.dim(3);
    const std::size_t plane = frames * bins, rows = in_ * 9, tile = detail::conv_tile_frames(rows, bins);
    expect_shape(gy.shape(), {n, out_, frames, bins}, "conv2d grad");
    Tensor<T> gx = input_grad_ ? Tensor<T>(input_.shape()) : Tensor<T>();
    std::vector<T> cols(rows * std::min(tile, frames) * bins), gcols(input_grad_ ? cols.size() : 0);
    const auto w = as_matrix(static_cast<const T*>(weight.value.data()), out_, rows);
    auto gw = as_matrix(weight.grad.data(), out_, rows);
    for (std::size_t i = 0; i < n; ++i) {
      const T* gi = gy.data() + i * out_ * plane;
      for (std::size_t o = 0; o < out_; ++o) bias.grad[o] += static_cast<T>(detail::lane_sum(gi + o * plane, plane));
      for (std::size_t t0 = 0; t0 < frames; t0 += tile) {
        const std::size_t t1 = std::min(frames, t0 + tile), width = (t1 - t0) * bins;
        detail::im2col_3x3(input_.data() + i * in_ * plane, in_, frames, bins, t0, t1, cols.data());
        const ConstStridedMap g(gi + t0 * bins, out_, width, Eigen::OuterStride<>(plane));
        gw.noalias() += g * as_matrix(static_cast<const T*>(cols.data()), rows, width).transpose();
        if (!input_grad_) continue;
        as_matrix(gcols.data(), rows, width).noalias() = w.transpose() * g;
        detail::col2im_3x3(gcols.data(), in_, frames, bins, t0, t1, gx.data() + i * in_ * plane);
      }
    }
    return gx;
  }

  void parameters(std::vector<Param<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Param<T> weight;
  Param<T> bias;

 private:
  std::size_t in_, out_;
  Tensor<T> input_;
  bool input_grad_ = true;
};

/// Non-causal 1-D convolution over (N, C, T) with symmetric zero padding of
/// (kernel/2)*dilation on each side, so the sequence length is preserved.
/// Tap k reads input at t + (k - kernel/2) * dilation.
template <typename T>
class Conv1d {
 public:
  Conv1d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel = 1, std::size_t dilation = 1)
      : weight(name + ".weight", {out_channels, in_channels, kernel}),
        bias(name + ".bias", {out_channels}),
        in_(in_channels),
        out_(out_channels),
        kernel_(kernel),
        dilation_(dilation) {
    if (kernel % 2 == 0) throw ConfigError("conv1d kernel size must be odd");
    if (dilation == 0) throw ConfigError("conv1d dilation must be positive");
  }

  void init(Rng& rng) {
    glorot_uniform(weight, in_ * kernel_, out_ * kernel_, rng);
    bias.value.fill(T{0});
  }

  std::size_t dilation() const { return dilation_; }
  std::size_t kernel() const { return kernel_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    expect_rank(x.shape(), 3, "conv1d input");
    if (x.dim(1) != in_) throw ShapeError("conv1d: input channel count mismatch");
    const std::size_t n = x.dim(0), frames = x.dim(2), rows = in_ * kernel_;
    Tensor<T> y({n, out_, frames});
    std::vector<T> cols(kernel_ == 1 ? 0 : rows * frames);
    const auto w = as_matrix(static_cast<const T*>(weight.value.data()), out_, rows);
    const auto b = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.value.data(),
                                                                           out_);
    for (std::size_t i = 0; i < n; ++i) {
      const T* src = x.data() + i * in_ * frames;
      if (kernel_ != 1) {
        detail::im2col_1d(src, in_, frames, kernel_, dilation_, cols.data());
        src = cols.data();
      }
      auto out = as_matrix(y.data() + i * out_ * frames, out_, frames);
      out.noalias() = w * as_matrix(src, rows, frames);
      out.colwise() += b;
    }
    if (mode == Mode::train) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (input_.empty()) throw UninitializedError("conv1d backward without a train-mode forward");
    const std::size_t n = input_.dim(0), frames = input_.dim(2), rows = in_ * kernel_;
    expect_shape(gy.shape(), {n, out_, frames}, "conv1d grad");
    Tensor<T> gx(input_.shape());
    std::vector<T> cols(kernel_ == 1 ? 0 : rows * frames), gcols(kernel_ == 1 ? 0 : rows * frames);
    const auto w = as_matrix(static_cast<const T*>(weight.value.data()), out_, rows);
    auto gw = as_matrix(weight.grad.data(), out_, rows);
    for (std::size_t i = 0; i < n; ++i) {
      const T* src = input_.data() + i * in_ * frames;
      if (kernel_ != 1) {
        detail::im2col_1d(src, in_, frames, kernel_, dilation_, cols.data());
        src = cols.data();
      }
      const auto g = as_matrix(gy.data() + i * out_ * frames, out_, frames);
      gw.noalias() += g * as_matrix(src, rows, frames).transpose();
      for (std::size_t o = 0; o < out_; ++o) bias.grad[o] += static_cast<T>(detail::lane_sum(g.data() + o * g.cols(), static_cast<std::size_t>(g.cols())));
      T* gxi = gx.data() + i * in_ * frames;
      if (kernel_ == 1) {
        as_matrix(gxi, in_, frames).noalias() = w.transpose() * g;
      } else {
        as_matrix(gcols.data(), rows, frames).noalias() = w.transpose() * g;
        detail::col2im_1d(gcols.data(), in_, frames, kernel_, dilation_, gxi);
      }
    }
    return gx;
  }

  void parameters(std::vector<Param<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Param<T> weight;
  Param<T> bias;

 private:
  std::size_t in_, out_, kernel_, dilation_;
  Tensor<T> input_;
};

/// Max over non-overlapping windows of the last (frequency) axis of (N, C, T, F).
template <typename T>
class MaxPoolFreq {
 public:
  explicit MaxPoolFreq(std::size_t width) : width_(width) {
    if (width == 0) throw ConfigError("pool width must be positive");
  }

  std::size_t width() const { return width_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    expect_rank(x.shape(), 4, "maxpool input");
    const std::size_t bins = x.dim(3);
    if (bins % width_ != 0)
      throw ShapeError("maxpool: " + std::to_string(bins) + " bins not divisible by width " +
                       std::to_string(width_));
    const std::size_t out_bins = bins / width_;
    Tensor<T> y({x.dim(0), x.dim(1), x.dim(2), out_bins});
    const std::size_t rows = x.dim(0) * x.dim(1) * x.dim(2);
    if (mode == Mode::train) argmax_.assign(y.size(), 0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out_bins; ++o) {
        std::size_t best = r * bins + o * width_;
        for (std::size_t k = 1; k < width_; ++k)
          if (x[r * bins + o * width_ + k] > x[best]) best = r * bins + o * width_ + k;
        y[r * out_bins + o] = x[best];
        if (mode == Mode::train) argmax_[r * out_bins + o] = best;
      }
    }
    if (mode == Mode::train) in_shape_ = x.shape();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (in_shape_.empty()) throw UninitializedError("maxpool backward without a train-mode forward");
    if (gy.size() != argmax_.size()) throw ShapeError("maxpool grad size mismatch");
    Tensor<T> gx(in_shape_);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax_[i]] += gy[i];
    return gx;
  }

 private:
  std::size_t width_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Batch normalization over axis 1 of (N, C, ...) tensors. Train mode
/// normalizes with batch statistics over every non-channel index and updates
/// the running statistics; infer mode uses the running statistics.
template <typename T>
class BatchNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNorm(const std::string& name, std::size_t channels)
      : gamma(name + ".gamma", {channels}),
        beta(name + ".beta", {channels}),
        running_mean({channels}, T{0}),
        running_var({channels}, T{1}),
        name_(name),
        channels_(channels) {
    gamma.value.fill(T{1});
  }

  bool stats_ready() const { return stats_ready_; }
  void mark_stats_ready() { stats_ready_ = true; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.rank() < 2 || x.dim(1) != channels_)
      throw ShapeError("batchnorm: expected channel axis of size " + std::to_string(channels_) +
                       ", got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), inner = x.size() / (n * channels_);
    const double count = static_cast<double>(n * inner);
    Tensor<T> y(x.shape());
    invstd_.assign(channels_, 0.0);
    if (mode == Mode::train) {
      xhat_ = Tensor<T>(x.shape());
      for (std::size_t c = 0; c < channels_; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += detail::lane_sum(at(x.data(), i, c, inner), inner);
        const double mean = sum / count;
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) sq += detail::lane_sq_dev(at(x.data(), i, c, inner), static_cast<T>(mean), inner);
        const double var = sq / count;
        const double inv = 1.0 / std::sqrt(var + kEps);
        invstd_[c] = inv;
        const T g = gamma.value[c], b = beta.value[c], m = static_cast<T>(mean), iv = static_cast<T>(inv);
        for (std::size_t i = 0; i < n; ++i) {
          auto h = seg(xhat_.data(), i, c, inner);
          h = (seg(x.data(), i, c, inner) - m) * iv;
          seg(y.data(), i, c, inner) = g * h + b;
        }
        const double unbiased = count > 1 ? sq / (count - 1) : var;
        running_mean[c] = static_cast<T>(kMomentum * running_mean[c] + (1 - kMomentum) * mean);
        running_var[c] = static_cast<T>(kMomentum * running_var[c] + (1 - kMomentum) * unbiased);
      }
      stats_ready_ = true;
      train_cache_ = true;
    } else {
      if (!stats_ready_)
        throw UninitializedError("batchnorm '" + name_ + "' used in infer mode before any statistics update");
      xhat_ = Tensor<T>();
      for (std::size_t c = 0; c < channels_; ++c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + kEps);
        invstd_[c] = inv;
        const T scale = static_cast<T>(gamma.value[c] * inv);
        const T shift = static_cast<T>(beta.value[c] - gamma.value[c] * inv * running_mean[c]);
        for (std::size_t i = 0; i < n; ++i) seg(y.data(), i, c, inner) = seg(x.data(), i, c, inner) * scale + shift;
      }
      infer_input_ = Tensor<T>(x.shape());
      std::copy(x.vec().begin(), x.vec().end(), infer_input_.data());
      train_cache_ = false;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (train_cache_) {
      expect_shape(gy.shape(), xhat_.shape(), "batchnorm grad");
    } else {
      if (infer_input_.empty()) throw UninitializedError("batchnorm backward without a forward");
      expect_shape(gy.shape(), infer_input_.shape(), "batchnorm grad");
    }
    const std::size_t n = gy.dim(0), inner = gy.size() / (n * channels_);
    const double count = static_cast<double>(n * inner);
    Tensor<T> gx(gy.shape());
    for (std::size_t c = 0; c < channels_; ++c) {
      const double inv = invstd_[c];
      const T g = gamma.value[c];
      if (train_cache_) {
        double sum_dy = 0.0, sum_dy_h = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          sum_dy += detail::lane_sum(at(gy.data(), i, c, inner), inner);
          sum_dy_h += detail::lane_dot(at(gy.data(), i, c, inner), at(xhat_.data(), i, c, inner), inner);
        }
        gamma.grad[c] += static_cast<T>(sum_dy_h);
        beta.grad[c] += static_cast<T>(sum_dy);
        const T k = static_cast<T>(g * inv / count), cnt = static_cast<T>(count);
        const T mdy = static_cast<T>(sum_dy), mdh = static_cast<T>(sum_dy_h);
        for (std::size_t i = 0; i < n; ++i)
          seg(gx.data(), i, c, inner) =
              k * (cnt * seg(gy.data(), i, c, inner) - mdy - seg(xhat_.data(), i, c, inner) * mdh);
      } else {
        // Statistics are constants here, so the layer is affine in x.
        const T m = running_mean[c], iv = static_cast<T>(inv);
        double sum_dy = 0.0, sum_dy_h = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const T* d = at(gy.data(), i, c, inner);
          const T* xi = at(infer_input_.data(), i, c, inner);
          sum_dy += detail::lane_sum(d, inner);
          sum_dy_h += detail::lane_reduce<T>(inner, [&](std::size_t k) { return d[k] * ((xi[k] - m) * iv); });
        }
        gamma.grad[c] += static_cast<T>(sum_dy_h);
        beta.grad[c] += static_cast<T>(sum_dy);
        const T k = static_cast<T>(g * inv);
        for (std::size_t i = 0; i < n; ++i) seg(gx.data(), i, c, inner) = k * seg(gy.data(), i, c, inner);
      }
    }
    return gx;
  }

  void parameters(std::vector<Param<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  void buffers(std::vector<Buffer<T>>& out) {
    out.push_back({name_ + ".running_mean", &running_mean, &stats_ready_});
    out.push_back({name_ + ".running_var", &running_var, &stats_ready_});
  }

  Param<T> gamma;
  Param<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;

 private:
  std::string name_;
  std::size_t channels_;
  bool stats_ready_ = false;
  bool train_cache_ = false;
  std::vector<double> invstd_;
  Tensor<T> xhat_;
  Tensor<T> infer_input_;

  const T* at(const T* p, std::size_t i, std::size_t c, std::size_t inner) const {
    return p + (i * channels_ + c) * inner;
  }
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> seg(T* p, std::size_t i, std::size_t c, std::size_t inner) const {
    return {p + (i * channels_ + c) * inner, static_cast<Eigen::Index>(inner)};
  }
  Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> seg(const T* p, std::size_t i, std::size_t c,
                                                            std::size_t inner) const {
    return {p + (i * channels_ + c) * inner, static_cast<Eigen::Index>(inner)};
  }
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y(x.shape());
    arr(y) = arr(x).max(T{0});
    if (mode == Mode::train) {
      shape_ = x.shape();
      mask_.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) mask_[i] = y[i] > T{0};
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    expect_shape(gy.shape(), shape_, "relu grad");
    Tensor<T> gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = mask_[i] ? gy[i] : T{0};
    return gx;
  }

 private:
  static Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> arr(Tensor<T>& t) {
    return {t.data(), static_cast<Eigen::Index>(t.size())};
  }
  static Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> arr(const Tensor<T>& t) {
    return {t.data(), static_cast<Eigen::Index>(t.size())};
  }
  Shape shape_;
  std::vector<std::uint8_t> mask_;
};

template <typename T>
class Sigmoid {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
    if (mode == Mode::train) out_ = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    expect_shape(gy.shape(), out_.shape(), "sigmoid grad");
    Tensor<T> gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * out_[i] * (T{1} - out_[i]);
    return gx;
  }

 private:
  Tensor<T> out_;
};

template <typename T>
class Tanh {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    if (mode == Mode::train) out_ = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    expect_shape(gy.shape(), out_.shape(), "tanh grad");
    Tensor<T> gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * (T{1} - out_[i] * out_[i]);
    return gx;
  }

 private:
  Tensor<T> out_;
};

/// tanh(z) * sigmoid(z) on one shared pre-activation.
template <typename T>
class GatedActivation {
 public:
  Tensor<T> forward(const Tensor<T>& z, Mode mode) {
    Tensor<T> y(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) y[i] = std::tanh(z[i]) * sigmoid(z[i]);
    if (mode == Mode::train) in_ = z;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    expect_shape(gy.shape(), in_.shape(), "gated activation grad");
    Tensor<T> gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const T th = std::tanh(in_[i]);
      const T sg = sigmoid(in_[i]);
      gx[i] = gy[i] * ((T{1} - th * th) * sg + th * sg * (T{1} - sg));
    }
    return gx;
  }

 private:
  Tensor<T> in_;
};

/// Inverted dropout of whole channels of (N, C, ...) tensors.
template <typename T>
class SpatialDropout {
 public:
  explicit SpatialDropout(double rate, std::uint64_t seed = 0) : rate_(rate), rng_(seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  }

  void reseed(std::uint64_t seed) { rng_.seed(seed); }
  double rate() const { return rate_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.rank() < 2) throw ShapeError("spatial dropout expects (N, C, ...)");
    const std::size_t maps = x.dim(0) * x.dim(1), inner = x.size() / maps;
    scale_.assign(maps, T{1});
    if (mode == Mode::infer || rate_ == 0.0) {
      train_ = false;
      return x;
    }
    const T keep = static_cast<T>(1.0 / (1.0 - rate_));
    for (auto& s : scale_) s = rng_.uniform() < rate_ ? T{0} : keep;
    Tensor<T> y(x.shape());
    for (std::size_t m = 0; m < maps; ++m)
      for (std::size_t k = 0; k < inner; ++k) y[m * inner + k] = x[m * inner + k] * scale_[m];
    train_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (!train_) return gy;
    const std::size_t maps = scale_.size(), inner = gy.size() / maps;
    Tensor<T> gx(gy.shape());
    for (std::size_t m = 0; m < maps; ++m)
      for (std::size_t k = 0; k < inner; ++k) gx[m * inner + k] = gy[m * inner + k] * scale_[m];
    return gx;
  }

 private:
  double rate_;
  Rng rng_;
  bool train_ = false;
  std::vector<T> scale_;
};

/// Affine map of the last axis: (M, I) x (I, O) + b.
template <typename T>
class Dense {
 public:
  Dense(const std::string& name, std::size_t in, std::size_t out)
      : weight(name + ".weight", {in, out}), bias(name + ".bias", {out}), in_(in), out_(out) {}

  void init(Rng& rng) {
    glorot_uniform(weight, in_, out_, rng);
    bias.value.fill(T{0});
  }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    expect_rank(x.shape(), 2, "dense input");
    if (x.dim(1) != in_) throw ShapeError("dense: input feature count mismatch");
    const std::size_t rows = x.dim(0);
    Tensor<T> y({rows, out_});
    auto out = as_matrix(y.data(), rows, out_);
    out.noalias() = as_matrix(x.data(), rows, in_) *
                    as_matrix(static_cast<const T*>(weight.value.data()), in_, out_);
    out.rowwise() +=
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value.data(), out_);
    if (mode == Mode::train) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (input_.empty()) throw UninitializedError("dense backward without a train-mode forward");
    const std::size_t rows = input_.dim(0);
    expect_shape(gy.shape(), {rows, out_}, "dense grad");
    const auto g = as_matrix(gy.data(), rows, out_);
    as_matrix(weight.grad.data(), in_, out_).noalias() +=
        as_matrix(input_.data(), rows, in_).transpose() * g;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.grad.data(), out_) += g.colwise().sum();
    Tensor<T> gx({rows, in_});
    as_matrix(gx.data(), rows, in_).noalias() =
        g * as_matrix(static_cast<const T*>(weight.value.data()), in_, out_).transpose();
    return gx;
  }

  void parameters(std::vector<Param<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Param<T> weight;
  Param<T> bias;

 private:
  std::size_t in_, out_;
  Tensor<T> input_;
};

/// Bidirectional GRU, forward pass only. Gate column order in the packed
/// (I, 3H) / (H, 3H) matrices is update, reset, candidate. The reset gate
/// multiplies the hidden state before the candidate's recurrent product.
template <typename T>
class BiGru {
 public:
  struct Direction {
    Direction(const std::string& name, std::size_t in, std::size_t hidden)
        : input_weight(name + ".input_weight", {in, 3 * hidden}),
          recurrent_weight(name + ".recurrent_weight", {hidden, 3 * hidden}),
          bias(name + ".bias", {3 * hidden}) {}
    Param<T> input_weight;
    Param<T> recurrent_weight;
    Param<T> bias;
  };

  BiGru(const std::string& name, std::size_t in, std::size_t hidden)
      : fwd(name + ".fwd", in, hidden), bwd(name + ".bwd", in, hidden), in_(in), hidden_(hidden) {}

  void init(Rng& rng) {
    for (Direction* d : {&fwd, &bwd}) {
      glorot_uniform(d->input_weight, in_, 3 * hidden_, rng);
      glorot_uniform(d->recurrent_weight, hidden_, 3 * hidden_, rng);
      d->bias.value.fill(T{0});
    }
  }

  std::size_t hidden() const { return hidden_; }
  std::size_t in_features() const { return in_; }

  /// (N, T, I) -> (N, T, 2H); frame t is [h_fwd(t); h_bwd(t)].
  Tensor<T> forward(const Tensor<T>& x) const {
    expect_rank(x.shape(), 3, "gru input");
    if (x.dim(2) != in_) throw ShapeError("gru: input feature count mismatch");
    const std::size_t n = x.dim(0), frames = x.dim(1), h = hidden_;
    Tensor<T> y({n, frames, 2 * h});
    RowMatrix<T> proj(frames, 3 * h);
    Eigen::Matrix<T, 1, Eigen::Dynamic> state(h), gates(2 * h), cand(h), reset_state(h);
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = as_matrix(x.data() + i * frames * in_, frames, in_);
      for (int dir = 0; dir < 2; ++dir) {
        const Direction& d = dir == 0 ? fwd : bwd;
        const auto w = as_matrix(d.input_weight.value.data(), in_, 3 * h);
        const auto u = as_matrix(d.recurrent_weight.value.data(), h, 3 * h);
        const auto u_gates = u.leftCols(2 * h);
        const auto u_cand = u.rightCols(h);
        proj.noalias() = xi * w;
        proj.rowwise() +=
            Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(d.bias.value.data(), 3 * h);
        state.setZero();
        for (std::size_t s = 0; s < frames; ++s) {
          const std::size_t t = dir == 0 ? s : frames - 1 - s;
          gates.noalias() = state * u_gates;
          gates += proj.row(t).head(2 * h);
          for (std::size_t k = 0; k < 2 * h; ++k) gates[k] = sigmoid(gates[k]);
          reset_state = gates.tail(h).cwiseProduct(state);
          cand.noalias() = reset_state * u_cand;
          cand += proj.row(t).tail(h);
          T* out = y.data() + (i * frames + t) * 2 * h + static_cast<std::size_t>(dir) * h;
          for (std::size_t k = 0; k < h; ++k) {
            const T z = gates[k];
            state[k] = (T{1} - z) * state[k] + z * std::tanh(cand[k]);
            out[k] = state[k];
          }
        }
      }
    }
    return y;
  }

  void parameters(std::vector<Param<T>*>& out) {
    for (Direction* d : {&fwd, &bwd}) {
      out.push_back(&d->input_weight);
      out.push_back(&d->recurrent_weight);
      out.push_back(&d->bias);
    }
  }

  Direction fwd;
  Direction bwd;

 private:
  std::size_t in_, hidden_;
};

}  // namespace seld::nn
