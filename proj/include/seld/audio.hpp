// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "seld/error.hpp"
#include "seld/random.hpp"
#include "seld/tensor.hpp"

namespace seld {

/// Multichannel audio, samples indexed (channel, time).
struct AudioClip {
  Tensor<double> samples;
  std::uint32_t sample_rate_hz = 0;

  std::size_t channels() const { return samples.empty() ? 0 : samples.dim(0); }
  std::size_t frames() const { return samples.empty() ? 0 : samples.dim(1); }
  double* channel(std::size_t c) { return samples.data() + c * frames(); }
  const double* channel(std::size_t c) const { return samples.data() + c * frames(); }
};

enum class WavEncoding { pcm16, pcm24, float32 };

namespace detail {

inline std::uint32_t read_le(const unsigned char* p, int bytes) {
  std::uint32_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline void put_le(std::string& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace detail

/// Decodes a RIFF/WAVE byte string (PCM 16/24-bit or float32, 1-8 channels).
inline AudioClip decode_wav(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12) throw IoError("truncated WAV header");
  if (std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (true) {
    if (pos + 8 > n) throw IoError(have_fmt ? "WAV has no data chunk" : "WAV has no fmt chunk");
    const std::uint32_t size = detail::read_le(p + pos + 4, 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16 || body + size > n) throw IoError("truncated fmt chunk");
      format = static_cast<std::uint16_t>(detail::read_le(p + body, 2));
      channels = static_cast<std::uint16_t>(detail::read_le(p + body + 2, 2));
      rate = detail::read_le(p + body + 4, 4);
      block_align = static_cast<std::uint16_t>(detail::read_le(p + body + 12, 2));
      bits = static_cast<std::uint16_t>(detail::read_le(p + body + 14, 2));
      if (format == 0xFFFE) {
        if (size < 40) throw FormatError("short WAVE_FORMAT_EXTENSIBLE header");
        format = static_cast<std::uint16_t>(detail::read_le(p + body + 24, 2));
      }
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk precedes fmt chunk");
      const bool pcm = format == 1 && (bits == 16 || bits == 24);
      const bool flt = format == 3 && bits == 32;
      if (!pcm && !flt)
        throw FormatError("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                          std::to_string(bits) + " bits)");
      if (channels < 1 || channels > 8)
        throw FormatError("unsupported channel count " + std::to_string(channels));
      if (rate == 0) throw FormatError("WAV sample rate is zero");
      const std::size_t width = bits / 8;
      if (block_align != width * channels) throw FormatError("inconsistent WAV block alignment");
      if (body + size > n) throw IoError("truncated WAV data chunk");
      const std::size_t count = size / block_align;
      if (count == 0) throw FormatError("WAV contains no samples");

      AudioClip clip;
      clip.sample_rate_hz = rate;
      clip.samples = Tensor<double>({channels, count});
      const unsigned char* d = p + body;
      for (std::size_t t = 0; t < count; ++t) {
        for (std::size_t c = 0; c < channels; ++c, d += width) {
          double v;
          if (bits == 16) {
            v = static_cast<std::int16_t>(detail::read_le(d, 2)) / 32768.0;
          } else if (bits == 24) {
            auto raw = static_cast<std::int32_t>(detail::read_le(d, 3) << 8) >> 8;
            v = raw / 8388608.0;
          } else {
            float f;
            const std::uint32_t u = detail::read_le(d, 4);
            std::memcpy(&f, &u, 4);
            if (!std::isfinite(f)) throw FormatError("non-finite float sample in WAV");
            v = std::clamp(static_cast<double>(f), -1.0, 1.0);
          }
          clip.samples(c, t) = v;
        }
      }
      return clip;
    }
    pos = body + size + (size & 1u);
  }
}

inline std::string encode_wav(const AudioClip& clip, WavEncoding enc = WavEncoding::pcm16) {
  const std::size_t channels = clip.channels(), count = clip.frames();
  if (channels < 1 || channels > 8) throw InputError("WAV output needs 1-8 channels");
  const int width = enc == WavEncoding::pcm16 ? 2 : enc == WavEncoding::pcm24 ? 3 : 4;
  const std::uint64_t data_size = static_cast<std::uint64_t>(count) * channels * width;
  if (data_size > 0xFFFFFFF0ull) throw InputError("clip too long for a RIFF file");

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  detail::put_le(out, static_cast<std::uint32_t>(36 + data_size), 4);
  out += "WAVEfmt ";
  detail::put_le(out, 16, 4);
  detail::put_le(out, enc == WavEncoding::float32 ? 3 : 1, 2);
  detail::put_le(out, static_cast<std::uint32_t>(channels), 2);
  detail::put_le(out, clip.sample_rate_hz, 4);
  detail::put_le(out, static_cast<std::uint32_t>(clip.sample_rate_hz * channels * width), 4);
  detail::put_le(out, static_cast<std::uint32_t>(channels * width), 2);
  detail::put_le(out, static_cast<std::uint32_t>(8 * width), 2);
  out += "data";
  detail::put_le(out, static_cast<std::uint32_t>(data_size), 4);
  for (std::size_t t = 0; t < count; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = std::clamp(clip.samples(c, t), -1.0, 1.0);
      if (enc == WavEncoding::float32) {
        const float f = static_cast<float>(v);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        detail::put_le(out, u, 4);
      } else {
        const double scale = enc == WavEncoding::pcm16 ? 32768.0 : 8388608.0;
        const auto q = static_cast<std::int32_t>(std::clamp(std::round(v * scale), -scale, scale - 1));
        detail::put_le(out, static_cast<std::uint32_t>(q), width);
      }
    }
  }
  return out;
}

inline AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    if (dynamic_cast<const IoError*>(&e)) throw IoError(path + ": " + e.what());
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_wav(const std::string& path, const AudioClip& clip, WavEncoding enc = WavEncoding::pcm16) {
  const std::string bytes = encode_wav(clip, enc);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Resampling

struct ResampleOptions {
  std::size_t taps_per_phase = 64;  // kernel span in output sample periods
  double kaiser_beta = 8.0;
};

namespace detail {

inline double kaiser(double x, double beta) {
  if (std::abs(x) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - x * x)) / std::cyl_bessel_i(0.0, beta);
}

inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace detail

/// Windowed-sinc polyphase downsampler. Output sample j sits at source time
/// j * source / target; each phase's taps are normalised to unit DC gain.
inline AudioClip resample(const AudioClip& clip, std::uint32_t target_hz, const ResampleOptions& opts = {}) {
  const std::uint32_t source_hz = clip.sample_rate_hz;
  if (target_hz == 0 || source_hz == 0) throw InputError("sample rates must be positive");
  if (target_hz > source_hz)
    throw UnsupportedError("upsampling " + std::to_string(source_hz) + " -> " + std::to_string(target_hz) +
                           " Hz is not supported");
  if (target_hz == source_hz) return clip;

  const std::uint64_t g = std::gcd(source_hz, target_hz);
  const std::uint64_t up = target_hz / g, down = source_hz / g;
  const std::size_t n = clip.frames();
  const std::size_t out_len = static_cast<std::size_t>(n * up / down);
  if (out_len == 0) throw InputError("clip too short to resample");

  const double ratio = static_cast<double>(target_hz) / source_hz;
  const double half = 0.5 * static_cast<double>(opts.taps_per_phase) / ratio;  // in source samples
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(half));
  const std::size_t width = static_cast<std::size_t>(2 * reach + 1);

  auto make_taps = [&](std::uint64_t phase, std::vector<double>& taps) {
    // Fractional offset of the output instant past its base source sample.
    const double frac = static_cast<double>(phase) / up;
    double sum = 0.0;
    for (std::size_t k = 0; k < width; ++k) {
      const double tau = static_cast<double>(static_cast<std::ptrdiff_t>(k) - reach) - frac;
      const double v = ratio * detail::sinc(ratio * tau) * detail::kaiser(tau / half, opts.kaiser_beta);
      taps[k] = v;
      sum += v;
    }
    for (auto& v : taps) v /= sum;
  };

  const bool cache = up <= 4096;
  std::vector<std::vector<double>> table;
  if (cache) {
    table.assign(up, std::vector<double>(width));
    for (std::uint64_t p = 0; p < up; ++p) make_taps(p, table[p]);
  }
  std::vector<double> scratch(width);

  AudioClip out;
  out.sample_rate_hz = target_hz;
  out.samples = Tensor<double>({clip.channels(), out_len});
  for (std::size_t j = 0; j < out_len; ++j) {
    const std::uint64_t pos = j * down;
    const auto base = static_cast<std::ptrdiff_t>(pos / up);
    const std::uint64_t phase = pos % up;
    const std::vector<double>* taps = &scratch;
    if (cache) {
      taps = &table[phase];
    } else {
      make_taps(phase, scratch);
    }
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, base - reach);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, base + reach);
    for (std::size_t c = 0; c < clip.channels(); ++c) {
      const double* x = clip.channel(c);
      double acc = 0.0;
      for (std::ptrdiff_t i = lo; i <= hi; ++i) acc += (*taps)[static_cast<std::size_t>(i - base + reach)] * x[i];
      out.samples(c, j) = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// STFT features

struct StftOptions {
  std::size_t win_len = 512;
  std::size_t hop = 256;
};

inline std::size_t stft_frame_count(std::size_t samples, const StftOptions& opts = {}) {
  if (samples < opts.win_len) return 0;
  return 1 + (samples - opts.win_len) / opts.hop;
}

/// Periodic Hamming window.
inline std::vector<double> hamming(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

/// Largest float not above pi.
inline const float kMaxPhase = std::nextafter(std::numbers::pi_v<float>, 0.0f);

/// Stacked magnitude/phase spectrogram, shape (2C, frames, win_len/2).
/// Channels 0..C-1 hold magnitudes, C..2C-1 phases; the DC bin is dropped.
inline Tensor<float> stft_features(const AudioClip& clip, const StftOptions& opts = {}) {
  if (opts.win_len < 2 || opts.win_len % 2 != 0 || opts.hop == 0)
    throw InputError("STFT needs an even window length and a positive hop");
  const std::size_t channels = clip.channels(), n = clip.frames();
  if (channels == 0 || n < opts.win_len)
    throw InputError("clip of " + std::to_string(n) + " samples is shorter than one window (" +
                     std::to_string(opts.win_len) + ")");
  const std::size_t frames = stft_frame_count(n, opts), bins = opts.win_len / 2;
  const auto window = hamming(opts.win_len);

  Tensor<float> out({2 * channels, frames, bins});
  Eigen::FFT<double> fft;
  std::vector<double> buf(opts.win_len);
  std::vector<std::complex<double>> spec;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* x = clip.channel(c);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t i = 0; i < opts.win_len; ++i) buf[i] = x[t * opts.hop + i] * window[i];
      fft.fwd(spec, buf);
      for (std::size_t b = 0; b < bins; ++b) {
        const auto z = spec[b + 1];
        const double mag = std::abs(z);
        double phase = mag == 0.0 ? 0.0 : std::atan2(z.imag(), z.real());
        if (phase <= -std::numbers::pi) phase = std::numbers::pi;
        out(c, t, b) = static_cast<float>(mag);
        float ph = static_cast<float>(phase);
        // float(pi) exceeds pi, so rounding can leave (-pi, pi] at either end.
        if (ph > kMaxPhase || ph <= -kMaxPhase) ph = kMaxPhase;
        out(channels + c, t, b) = ph;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

enum class AugmentKind { awgn, noise_file, reverb };

struct AugmentSpec {
  AugmentKind kind = AugmentKind::awgn;
  double snr_db = 20.0;
  double reverb_strength = 0.0;
  std::uint64_t rng_seed = 0;
};

inline double mean_power(const Tensor<double>& x) {
  double acc = 0.0;
  for (double v : x.vec()) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

/// Mixes noise into the clip at exactly spec.snr_db over the whole clip.
inline AudioClip add_noise(const AudioClip& clip, const AugmentSpec& spec, const AudioClip* noise = nullptr) {
  if (!std::isfinite(spec.snr_db)) throw InputError("snr_db must be finite");
  const double p_signal = mean_power(clip.samples);
  if (p_signal == 0.0) throw DegenerateInputError("cannot set an SNR against a zero-power signal");

  Tensor<double> n(clip.samples.shape());
  if (spec.kind == AugmentKind::awgn) {
    Rng rng(spec.rng_seed);
    for (auto& v : n.vec()) v = rng.gaussian();
  } else if (spec.kind == AugmentKind::noise_file) {
    if (noise == nullptr || noise->frames() == 0) throw InputError("noise_file augmentation needs a noise clip");
    if (noise->channels() != clip.channels() || noise->sample_rate_hz != clip.sample_rate_hz)
      throw InputError("noise clip must match the signal's channel count and sample rate");
    // A seeded offset keeps different runs from always starting at sample 0.
    Rng rng(spec.rng_seed);
    const std::size_t offset = rng.below(noise->frames());
    for (std::size_t c = 0; c < clip.channels(); ++c)
      for (std::size_t t = 0; t < clip.frames(); ++t)
        n(c, t) = noise->samples(c, (t + offset) % noise->frames());
  } else {
    throw InputError("add_noise called with a reverb spec");
  }
  const double p_noise = mean_power(n);
  if (p_noise == 0.0) throw DegenerateInputError("noise clip has zero power");
  const double gain = std::sqrt(p_signal / (p_noise * std::pow(10.0, spec.snr_db / 10.0)));

  AudioClip out = clip;
  for (std::size_t i = 0; i < n.size(); ++i) out.samples[i] += gain * n[i];
  return out;
}

/// Decay time (to -60 dB) in seconds for a 0-100 reverb strength.
inline double reverb_rt60_s(double strength) { return strength / 100.0; }

/// Exponentially decaying white-noise impulse response with ir[0] = 1.
/// Length is 1.5 x RT60 so that a short, already negligible tail remains.
inline std::vector<double> reverb_impulse_response(double strength, std::uint32_t sample_rate_hz, std::uint64_t seed) {
  if (!(strength >= 0.0 && strength <= 100.0)) throw InputError("reverb strength must lie in [0, 100]");
  const double rt60 = reverb_rt60_s(strength);
  const auto len = 1 + static_cast<std::size_t>(std::ceil(1.5 * rt60 * sample_rate_hz));
  std::vector<double> ir(len, 0.0);
  ir[0] = 1.0;
  if (len == 1) return ir;
  const double tau = rt60 * sample_rate_hz / std::log(1000.0);  // amplitude time constant, samples
  Rng rng(seed);
  for (std::size_t i = 1; i < len; ++i) ir[i] = 0.5 * rng.uniform(-1.0, 1.0) * std::exp(-static_cast<double>(i) / tau);
  return ir;
}

namespace detail {

inline std::vector<double> fft_convolve(const double* x, std::size_t n, const std::vector<double>& h) {
  std::size_t size = 1;
  while (size < n + h.size() - 1) size <<= 1;
  Eigen::FFT<double> fft;
  std::vector<double> a(size, 0.0), b(size, 0.0), y;
  std::copy(x, x + n, a.begin());
  std::copy(h.begin(), h.end(), b.begin());
  std::vector<std::complex<double>> fa, fb;
  fft.fwd(fa, a);
  fft.fwd(fb, b);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  fft.inv(y, fa);
  y.resize(n);
  return y;
}

inline double peak(const Tensor<double>& x) {
  double m = 0.0;
  for (double v : x.vec()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace detail

/// Convolves every channel with the same synthetic IR, truncates to the
/// input length and rescales to the input's peak.
inline AudioClip apply_reverb(const AudioClip& clip, const AugmentSpec& spec) {
  const auto ir = reverb_impulse_response(spec.reverb_strength, clip.sample_rate_hz, spec.rng_seed);
  if (ir.size() == 1) return clip;
  AudioClip out = clip;
  for (std::size_t c = 0; c < clip.channels(); ++c) {
    const auto y = detail::fft_convolve(clip.channel(c), clip.frames(), ir);
    std::copy(y.begin(), y.end(), out.channel(c));
  }
  const double in_peak = detail::peak(clip.samples), out_peak = detail::peak(out.samples);
  if (out_peak > 0.0) {
    const double g = in_peak / out_peak;
    for (auto& v : out.samples.vec()) v *= g;
  }
  return out;
}

}  // namespace seld
