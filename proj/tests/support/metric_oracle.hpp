// SPDX-License-Identifier: Apache-2.0
// Brute-force reference scorers, written independently of seld/metrics.hpp.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <set>
#include <vector>

#include "seld/metrics.hpp"
#include "seld/random.hpp"

namespace seld::testing {

struct OracleSed {
  std::int64_t errors = 0;  // S + D + I
  std::int64_t n_ref = 0;
  std::int64_t tp = 0, fp = 0, fn = 0;
};

// Segment sets built with std::set, then counted element by element.
inline OracleSed oracle_sed(const std::vector<std::set<int>>& pred_frames, const std::vector<std::set<int>>& ref_frames,
                            std::size_t seg) {
  OracleSed o;
  for (std::size_t s = 0; s * seg < ref_frames.size(); ++s) {
    std::set<int> p, r;
    for (std::size_t t = s * seg; t < (s + 1) * seg && t < ref_frames.size(); ++t) {
      p.insert(pred_frames[t].begin(), pred_frames[t].end());
      r.insert(ref_frames[t].begin(), ref_frames[t].end());
    }
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (int c : p) (r.count(c) ? tp : fp) += 1;
    for (int c : r) fn += p.count(c) ? 0 : 1;
    const std::int64_t s_ = fn < fp ? fn : fp;
    o.errors += s_ + (fn - s_) + (fp - s_);
    o.n_ref += static_cast<std::int64_t>(r.size());
    o.tp += tp;
    o.fp += fp;
    o.fn += fn;
  }
  return o;
}

// Half-angle form: |u - v| = 2 sin(theta / 2) for unit vectors.
inline double oracle_angle(const std::array<double, 3>& u, const std::array<double, 3>& v) {
  const double dx = u[0] - v[0], dy = u[1] - v[1], dz = u[2] - v[2];
  const double half_chord = 0.5 * std::sqrt(dx * dx + dy * dy + dz * dz);
  return 2.0 * std::asin(half_chord > 1 ? 1 : half_chord) * 180.0 / std::numbers::pi;
}

// Recursive enumeration of every injective map from the smaller set into the
// larger one; returns the minimal total angle.
inline double oracle_frame_min(const std::vector<std::array<double, 3>>& a, const std::vector<std::array<double, 3>>& b) {
  const auto& s = a.size() <= b.size() ? a : b;
  const auto& l = a.size() <= b.size() ? b : a;
  std::vector<bool> used(l.size(), false);
  double best = 1e300;
  std::function<void(std::size_t, double)> rec = [&](std::size_t i, double acc) {
    if (i == s.size()) {
      best = acc < best ? acc : best;
      return;
    }
    for (std::size_t j = 0; j < l.size(); ++j) {
      if (used[j]) continue;
      used[j] = true;
      rec(i + 1, acc + oracle_angle(s[i], l[j]));
      used[j] = false;
    }
  };
  rec(0, 0.0);
  return s.empty() ? 0.0 : best;
}

struct OracleLoc {
  double angle_sum = 0.0;
  std::int64_t pairs = 0;
  std::int64_t equal_frames = 0;
};

inline OracleLoc oracle_localization(const FrameAnnotation& pred, const FrameAnnotation& ref) {
  OracleLoc o;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (pred[t].size() == ref[t].size()) ++o.equal_frames;
    std::vector<std::array<double, 3>> a, b;
    for (const auto& e : pred[t])
      if (e.doa != std::array<double, 3>{0, 0, 0}) a.push_back(e.doa);
    for (const auto& e : ref[t])
      if (e.doa != std::array<double, 3>{0, 0, 0}) b.push_back(e.doa);
    o.angle_sum += oracle_frame_min(a, b);
    o.pairs += static_cast<std::int64_t>(a.size() < b.size() ? a.size() : b.size());
  }
  return o;
}

struct RandomMetricCase {
  std::size_t classes = 0, frames_per_segment = 0;
  FrameAnnotation pred, ref;
  std::vector<std::set<int>> pred_sets, ref_sets;
};

inline std::array<double, 3> random_unit(Rng& rng) {
  while (true) {
    std::array<double, 3> v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 0.1 && n <= 1.0) return {v[0] / n, v[1] / n, v[2] / n};
  }
}

// Up to 4 classes, 20 segments and 3 sources per frame.
inline RandomMetricCase random_metric_case(Rng& rng) {
  RandomMetricCase c;
  c.classes = 1 + rng.below(4);
  c.frames_per_segment = 1 + rng.below(5);
  const std::size_t segments = 1 + rng.below(20);
  const std::size_t frames = segments * c.frames_per_segment - rng.below(c.frames_per_segment);
  const std::size_t max_src = c.classes < 3 ? c.classes : 3;
  auto fill = [&](FrameAnnotation& ann, std::vector<std::set<int>>& sets) {
    ann.assign(frames, {});
    sets.assign(frames, {});
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t k = rng.below(max_src + 1);
      std::vector<std::size_t> ids(c.classes);
      for (std::size_t i = 0; i < c.classes; ++i) ids[i] = i;
      for (std::size_t i = 0; i < k; ++i) {
        std::swap(ids[i], ids[i + rng.below(c.classes - i)]);
        auto dir = random_unit(rng);
        if (rng.uniform() < 0.05) dir = {0, 0, 0};
        ann[t].push_back({ids[i], dir});
        sets[t].insert(static_cast<int>(ids[i]));
      }
    }
  };
  fill(c.pred, c.pred_sets);
  fill(c.ref, c.ref_sets);
  return c;
}

}  // namespace seld::testing
