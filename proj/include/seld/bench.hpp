// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <vector>

#include <Eigen/Core>

#include "seld/config.hpp"
#include "seld/error.hpp"
#include "seld/models.hpp"
#include "seld/random.hpp"

namespace seld {

struct BenchOptions {
  ModelKind kind = ModelKind::seldtcn;
  ModelConfig config;
  std::size_t seq_len = 512;
  std::size_t repeats = 20;
  std::size_t warmup = 3;
  int threads = 1;
  std::uint64_t seed = 0;
};

struct BenchReport {
  ModelKind kind = ModelKind::seldtcn;
  std::size_t seq_len = 0;
  std::size_t repeats = 0;
  int threads = 1;
  std::vector<double> seconds;
  double mean_s = 0.0;
  double p50_s = 0.0;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Times infer-mode forward passes of a randomly initialised model on one
/// random feature sequence. Only the forward call sits inside the timer.
inline BenchReport run_bench(const BenchOptions& opts) {
  if (opts.repeats < 3) throw InputError("bench needs at least 3 repeats");
  if (opts.seq_len == 0) throw InputError("bench seq_len must be positive");
  if (opts.threads < 1) throw InputError("bench threads must be at least 1");
  Eigen::setNbThreads(opts.threads);

  auto model = build_model<float>(opts.config, opts.kind, opts.seed);
  Rng rng(mix_seed(opts.seed, 77));
  Tensor<float> x({1, opts.config.n_feature_channels, opts.seq_len, opts.config.n_bins});
  for (auto& v : x.vec()) v = static_cast<float>(rng.gaussian());
  // Running statistics come from one train-mode pass on the same input.
  model->calibrate(x);

  for (std::size_t i = 0; i < opts.warmup; ++i) (void)model->forward(x, Mode::infer);

  BenchReport r;
  r.kind = opts.kind;
  r.seq_len = opts.seq_len;
  r.repeats = opts.repeats;
  r.threads = opts.threads;
  for (std::size_t i = 0; i < opts.repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = model->forward(x, Mode::infer);
    const auto t1 = std::chrono::steady_clock::now();
    if (out.sed.empty()) throw NumericError("empty forward output");
    r.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  r.mean_s = std::accumulate(r.seconds.begin(), r.seconds.end(), 0.0) / static_cast<double>(r.seconds.size());
  r.p50_s = median(r.seconds);
  r.params = count_params(opts.config, opts.kind);
  r.macs = count_macs(opts.config, opts.kind, opts.seq_len);
  return r;
}

/// Flat `key = value` lines.
inline void write_bench_report(std::ostream& os, const BenchReport& r) {
  os.precision(9);
  os << "model = " << to_string(r.kind) << "\n"
     << "seq_len = " << r.seq_len << "\n"
     << "repeats = " << r.repeats << "\n"
     << "threads = " << r.threads << "\n"
     << "mean_s = " << r.mean_s << "\n"
     << "p50_s = " << r.p50_s << "\n"
     << "params = " << r.params << "\n"
     << "macs = " << r.macs << "\n";
  for (std::size_t i = 0; i < r.seconds.size(); ++i) os << "run_" << i << "_s = " << r.seconds[i] << "\n";
}

}  // namespace seld
