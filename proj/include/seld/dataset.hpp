// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "seld/audio.hpp"
#include "seld/config.hpp"
#include "seld/error.hpp"
#include "seld/synth.hpp"
#include "seld/tensor.hpp"
#include "seld/weights.hpp"

namespace seld {

/// Pre-STFT processing, applied in the order resample -> noise -> reverb.
struct FeaturePipeline {
  std::uint32_t sample_rate_hz = 16000;
  std::optional<AugmentSpec> noise;
  std::optional<AugmentSpec> reverb;
  const AudioClip* noise_clip = nullptr;
  StftOptions stft;

  AudioClip prepare(const AudioClip& clip) const {
    AudioClip x = clip.sample_rate_hz == sample_rate_hz ? clip : resample(clip, sample_rate_hz);
    if (noise) x = add_noise(x, *noise, noise_clip);
    if (reverb) x = apply_reverb(x, *reverb);
    return x;
  }

  Tensor<float> features(const AudioClip& clip) const { return stft_features(prepare(clip), stft); }

  FrameTiming timing() const { return FrameTiming::stft(sample_rate_hz, stft.win_len, stft.hop); }
};

/// Per-feature-channel z-score statistics from the training split.
struct FeatureNorm {
  Tensor<float> mean;  // (C)
  Tensor<float> std;   // (C)

  bool empty() const { return mean.empty(); }

  void apply(Tensor<float>& x) const {
    expect_rank(x.shape(), 3, "normalised features");
    if (x.dim(0) != mean.size()) throw ShapeError("feature channel count does not match the stored statistics");
    const std::size_t per = x.dim(1) * x.dim(2);
    for (std::size_t c = 0; c < mean.size(); ++c) {
      float* p = x.data() + c * per;
      const float m = mean[c], inv = 1.0f / std[c];
      for (std::size_t i = 0; i < per; ++i) p[i] = (p[i] - m) * inv;
    }
  }

  void store_into(WeightStore& store) const {
    store.add("norm.mean", mean);
    store.add("norm.std", std);
  }

  static FeatureNorm from_store(const WeightStore& store) {
    if (!store.find("norm.mean") || !store.find("norm.std")) throw FormatError("weights carry no feature statistics");
    return {store.get<float>("norm.mean"), store.get<float>("norm.std")};
  }
};

inline FeatureNorm compute_norm(const std::vector<Tensor<float>>& features) {
  if (features.empty()) throw DataError("no features to normalise");
  const std::size_t channels = features.front().dim(0);
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
  double count = 0;
  for (const auto& f : features) {
    if (f.dim(0) != channels) throw ShapeError("feature channel counts differ across clips");
    const std::size_t per = f.dim(1) * f.dim(2);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < per; ++i) {
        const double v = f[c * per + i];
        sum[c] += v;
        sq[c] += v * v;
      }
    count += static_cast<double>(per);
  }
  FeatureNorm n{Tensor<float>({channels}), Tensor<float>({channels})};
  for (std::size_t c = 0; c < channels; ++c) {
    const double m = sum[c] / count;
    const double var = std::max(0.0, sq[c] / count - m * m);
    n.mean[c] = static_cast<float>(m);
    n.std[c] = var > 1e-12 ? static_cast<float>(std::sqrt(var)) : 1.0f;
  }
  return n;
}

/// One scene: normalisable features (2C, T, F) plus frame-level targets.
struct Example {
  std::string name;
  Tensor<float> features;
  FrameTargets targets;
  std::vector<EventSpec> events;
};

inline Example load_example(const std::filesystem::path& wav, const FeaturePipeline& pipe, std::size_t n_sed) {
  Example ex;
  ex.name = wav.filename().string();
  ex.features = pipe.features(read_wav(wav.string()));
  auto csv = wav;
  csv.replace_extension(".csv");
  ex.events = load_event_csv(csv.string());
  ex.targets = frame_targets(ex.events, ex.features.dim(1), pipe.timing(), n_sed);
  return ex;
}

inline std::vector<Example> load_split(const std::string& dataset_dir, const std::string& split,
                                       const FeaturePipeline& pipe, std::size_t n_sed) {
  namespace fs = std::filesystem;
  const auto names = read_lines(fs::path(dataset_dir) / (split + ".txt"));
  if (names.empty()) throw DataError("split '" + split + "' in '" + dataset_dir + "' is empty");
  std::vector<Example> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(load_example(fs::path(dataset_dir) / n, pipe, n_sed));
  return out;
}

/// A fixed-length training sequence cut from one example.
struct Chunk {
  Tensor<float> features;  // (C, L, F)
  Tensor<float> sed;       // (L, N)
  Tensor<float> doa;       // (L, 3N)
};

/// Non-overlapping windows of `len` frames; a trailing remainder is covered
/// by one window aligned to the clip end. Clips shorter than `len` are
/// zero-padded.
inline std::vector<Chunk> make_chunks(const Example& ex, std::size_t len) {
  const std::size_t channels = ex.features.dim(0), frames = ex.features.dim(1), bins = ex.features.dim(2);
  const std::size_t n_sed = ex.targets.sed.dim(1);
  std::vector<std::size_t> starts;
  if (frames <= len) {
    starts.push_back(0);
  } else {
    for (std::size_t s = 0; s + len <= frames; s += len) starts.push_back(s);
    if (frames % len != 0) starts.push_back(frames - len);
  }
  std::vector<Chunk> out;
  for (std::size_t s : starts) {
    Chunk c{Tensor<float>({channels, len, bins}), Tensor<float>({len, n_sed}), Tensor<float>({len, 3 * n_sed})};
    const std::size_t n = std::min(len, frames - s);
    for (std::size_t ch = 0; ch < channels; ++ch)
      std::copy_n(ex.features.data() + (ch * frames + s) * bins, n * bins, c.features.data() + ch * len * bins);
    std::copy_n(ex.targets.sed.data() + s * n_sed, n * n_sed, c.sed.data());
    std::copy_n(ex.targets.doa.data() + s * 3 * n_sed, n * 3 * n_sed, c.doa.data());
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace seld
