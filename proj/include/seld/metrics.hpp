// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "seld/error.hpp"
#include "seld/prediction.hpp"
#include "seld/tensor.hpp"

namespace seld {

/// Boolean activity, shape (T, N); 1 marks an active class.
using Activity = Tensor<std::uint8_t>;

template <typename T>
Activity binarize_sed(const Tensor<T>& sed, double threshold = 0.5) {
  expect_rank(sed.shape(), 2, "binarize_sed");
  Activity out(sed.shape());
  for (std::size_t i = 0; i < sed.size(); ++i) out[i] = static_cast<double>(sed[i]) > threshold ? 1 : 0;
  return out;
}

/// Frames per one-second segment at the given feature hop.
inline std::size_t frames_per_second(double sample_rate_hz, double hop) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(sample_rate_hz / hop)));
}

// ---------------------------------------------------------------------------
// Segment-based ER / F1

/// Integer totals of the segment-based scores. Counts add across clips, so
/// accumulating and then scoring equals scoring the concatenation.
struct SegmentCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  std::uint64_t substitutions = 0, deletions = 0, insertions = 0;
  std::uint64_t n_ref = 0;
  std::uint64_t segments = 0;

  SegmentCounts& operator+=(const SegmentCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    n_ref += o.n_ref;
    segments += o.segments;
    return *this;
  }

  /// Absent when the reference holds no events.
  std::optional<double> er() const {
    if (n_ref == 0) return std::nullopt;
    return static_cast<double>(substitutions + deletions + insertions) / static_cast<double>(n_ref);
  }

  /// 1 when neither side has any event.
  double f1() const {
    const std::uint64_t den = 2 * tp + fp + fn;
    return den == 0 ? 1.0 : static_cast<double>(2 * tp) / static_cast<double>(den);
  }

  friend bool operator==(const SegmentCounts&, const SegmentCounts&) = default;
};

inline SegmentCounts segment_counts(const Activity& pred, const Activity& ref, std::size_t frames_per_segment) {
  expect_rank(ref.shape(), 2, "segment_counts");
  expect_shape(pred.shape(), ref.shape(), "segment_counts prediction");
  if (frames_per_segment == 0) throw InputError("frames_per_segment must be at least 1");
  const std::size_t frames = ref.dim(0), classes = ref.dim(1);
  SegmentCounts out;
  std::vector<std::uint8_t> p(classes), r(classes);
  for (std::size_t start = 0; start < frames; start += frames_per_segment) {
    const std::size_t stop = std::min(frames, start + frames_per_segment);
    std::fill(p.begin(), p.end(), 0);
    std::fill(r.begin(), r.end(), 0);
    for (std::size_t t = start; t < stop; ++t)
      for (std::size_t c = 0; c < classes; ++c) {
        p[c] |= pred(t, c);
        r[c] |= ref(t, c);
      }
    std::uint64_t tp = 0, fp = 0, fn = 0, nr = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      tp += p[c] && r[c];
      fp += p[c] && !r[c];
      fn += !p[c] && r[c];
      nr += r[c];
    }
    out.tp += tp;
    out.fp += fp;
    out.fn += fn;
    out.substitutions += std::min(fn, fp);
    out.deletions += fn > fp ? fn - fp : 0;
    out.insertions += fp > fn ? fp - fn : 0;
    out.n_ref += nr;
    ++out.segments;
  }
  return out;
}

struct SedScores {
  std::optional<double> er;
  double f1 = 0.0;
};

inline SedScores segment_er_f1(const Activity& pred, const Activity& ref, std::size_t frames_per_segment) {
  const auto c = segment_counts(pred, ref, frames_per_segment);
  return {c.er(), c.f1()};
}

// ---------------------------------------------------------------------------
// Localization

struct DoaEvent {
  std::size_t class_id = 0;
  std::array<double, 3> doa{};  // unit length, or all zero when undefined

  bool has_direction() const { return doa[0] != 0.0 || doa[1] != 0.0 || doa[2] != 0.0; }
  friend bool operator==(const DoaEvent&, const DoaEvent&) = default;
};

/// Per frame, the active events and their directions.
using FrameAnnotation = std::vector<std::vector<DoaEvent>>;

inline std::array<double, 3> normalized(std::array<double, 3> v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (n == 0.0 || !std::isfinite(n)) return {0.0, 0.0, 0.0};
  return {v[0] / n, v[1] / n, v[2] / n};
}

/// Angle between unit vectors in degrees. Equal to acos(clamp(u.v)) but
/// computed as atan2(|u x v|, u.v), which stays exact near 0 and 180.
inline double angle_deg(const std::array<double, 3>& u, const std::array<double, 3>& v) {
  const double dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  const double cx = u[1] * v[2] - u[2] * v[1], cy = u[2] * v[0] - u[0] * v[2], cz = u[0] * v[1] - u[1] * v[0];
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot) * 180.0 / std::numbers::pi;
}

template <typename T>
FrameAnnotation doa_vectors_from_prediction(const Prediction<T>& pred, const Activity& activity) {
  expect_shape(activity.shape(), pred.sed.shape(), "activity");
  expect_shape(pred.doa.shape(), {pred.frames(), 3 * pred.classes()}, "prediction doa");
  FrameAnnotation out(pred.frames());
  for (std::size_t t = 0; t < pred.frames(); ++t)
    for (std::size_t c = 0; c < pred.classes(); ++c)
      if (activity(t, c))
        out[t].push_back({c, normalized({static_cast<double>(pred.doa(t, 3 * c)),
                                         static_cast<double>(pred.doa(t, 3 * c + 1)),
                                         static_cast<double>(pred.doa(t, 3 * c + 2))})});
  return out;
}

inline Activity activity_from_annotation(const FrameAnnotation& ann, std::size_t n_classes) {
  if (ann.empty()) throw InputError("annotation has no frames");
  Activity out({ann.size(), n_classes});
  for (std::size_t t = 0; t < ann.size(); ++t)
    for (const auto& e : ann[t]) {
      if (e.class_id >= n_classes)
        throw DataError("class id " + std::to_string(e.class_id) + " outside [0, " + std::to_string(n_classes) + ")");
      out(t, e.class_id) = 1;
    }
  return out;
}

/// Accumulates frame recall and DOA error over frames.
struct LocalizationCounts {
  std::uint64_t frames = 0;
  std::uint64_t frames_count_match = 0;
  std::uint64_t pairs = 0;
  double angle_sum_deg = 0.0;

  LocalizationCounts& operator+=(const LocalizationCounts& o) {
    frames += o.frames;
    frames_count_match += o.frames_count_match;
    pairs += o.pairs;
    angle_sum_deg += o.angle_sum_deg;
    return *this;
  }

  double fr() const {
    if (frames == 0) throw InputError("frame recall over zero frames");
    return 100.0 * static_cast<double>(frames_count_match) / static_cast<double>(frames);
  }

  std::optional<double> de() const {
    if (pairs == 0) return std::nullopt;
    return angle_sum_deg / static_cast<double>(pairs);
  }
};

/// Minimal total angle over all pairings of min(|a|, |b|) directions; the
/// number of pairs is returned through `pairs`.
inline double best_assignment_deg(const std::vector<std::array<double, 3>>& a,
                                  const std::vector<std::array<double, 3>>& b, std::size_t& pairs) {
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  pairs = small.size();
  if (pairs == 0) return 0.0;
  if (large.size() > 8) throw UnsupportedError("more than 8 simultaneous sources in one frame");
  std::vector<std::size_t> perm(large.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = INFINITY;
  do {
    double sum = 0.0;
    for (std::size_t i = 0; i < small.size(); ++i) sum += angle_deg(small[i], large[perm[i]]);
    best = std::min(best, sum);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline LocalizationCounts localization_counts(const FrameAnnotation& pred, const FrameAnnotation& ref) {
  if (pred.size() != ref.size())
    throw ShapeError("prediction has " + std::to_string(pred.size()) + " frames, reference " +
                     std::to_string(ref.size()));
  LocalizationCounts out;
  std::vector<std::array<double, 3>> pv, rv;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    ++out.frames;
    out.frames_count_match += pred[t].size() == ref[t].size();
    pv.clear();
    rv.clear();
    for (const auto& e : pred[t])
      if (e.has_direction()) pv.push_back(e.doa);
    for (const auto& e : ref[t])
      if (e.has_direction()) rv.push_back(e.doa);
    std::size_t pairs = 0;
    out.angle_sum_deg += best_assignment_deg(pv, rv, pairs);
    out.pairs += pairs;
  }
  return out;
}

inline double frame_recall(const FrameAnnotation& pred, const FrameAnnotation& ref) {
  if (ref.empty()) throw InputError("frame recall over zero frames");
  return localization_counts(pred, ref).fr();
}

inline std::optional<double> doa_error(const FrameAnnotation& pred, const FrameAnnotation& ref) {
  return localization_counts(pred, ref).de();
}

// ---------------------------------------------------------------------------
// Full report

struct EvalReport {
  std::optional<double> er;
  double f1 = 0.0;
  double fr = 0.0;
  std::optional<double> de;
};

/// Streaming evaluator; add() clips in order, then report().
class Evaluator {
 public:
  Evaluator(std::size_t n_classes, std::size_t frames_per_segment)
      : n_classes_(n_classes), frames_per_segment_(frames_per_segment) {
    if (frames_per_segment == 0) throw InputError("frames_per_segment must be at least 1");
  }

  void add(const FrameAnnotation& pred, const FrameAnnotation& ref) {
    sed_ += segment_counts(activity_from_annotation(pred, n_classes_), activity_from_annotation(ref, n_classes_),
                           frames_per_segment_);
    loc_ += localization_counts(pred, ref);
  }

  void merge(const Evaluator& other) {
    sed_ += other.sed_;
    loc_ += other.loc_;
  }

  const SegmentCounts& segment() const { return sed_; }
  const LocalizationCounts& localization() const { return loc_; }

  EvalReport report() const { return {sed_.er(), sed_.f1(), loc_.fr(), loc_.de()}; }

 private:
  std::size_t n_classes_;
  std::size_t frames_per_segment_;
  SegmentCounts sed_;
  LocalizationCounts loc_;
};

inline EvalReport evaluate(const FrameAnnotation& pred, const FrameAnnotation& ref, std::size_t n_classes,
                           std::size_t frames_per_segment) {
  Evaluator ev(n_classes, frames_per_segment);
  ev.add(pred, ref);
  return ev.report();
}

// ---------------------------------------------------------------------------
// Interchange CSV: frame_index,class_id,x,y,z

inline constexpr const char* kAnnotationCsvHeader = "frame_index,class_id,x,y,z";

inline void write_annotation_csv(std::ostream& os, const FrameAnnotation& ann) {
  os << kAnnotationCsvHeader << '\n';
  os.precision(9);
  for (std::size_t t = 0; t < ann.size(); ++t)
    for (const auto& e : ann[t])
      os << t << ',' << e.class_id << ',' << e.doa[0] << ',' << e.doa[1] << ',' << e.doa[2] << '\n';
}

/// Reads the interchange CSV. `min_frames` pads trailing silent frames that a
/// sparse file cannot express.
inline FrameAnnotation read_annotation_csv(std::istream& is, std::size_t min_frames = 0) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty annotation CSV (header required)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kAnnotationCsvHeader) throw FormatError("bad annotation CSV header '" + line + "'");
  FrameAnnotation out(min_frames);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell[5];
    for (auto& c : cell)
      if (!std::getline(ss, c, ',')) throw FormatError("line " + std::to_string(lineno) + ": expected 5 fields");
    std::string extra;
    if (std::getline(ss, extra, ',')) throw FormatError("line " + std::to_string(lineno) + ": too many fields");
    try {
      std::size_t used = 0;
      const long long frame = std::stoll(cell[0], &used);
      if (used != cell[0].size() || frame < 0) throw std::invalid_argument("frame");
      const long long cls = std::stoll(cell[1], &used);
      if (used != cell[1].size() || cls < 0) throw std::invalid_argument("class");
      std::array<double, 3> v{};
      for (int i = 0; i < 3; ++i) {
        v[i] = std::stod(cell[2 + i], &used);
        if (used != cell[2 + i].size() || !std::isfinite(v[i])) throw std::invalid_argument("doa");
      }
      const auto f = static_cast<std::size_t>(frame);
      if (f >= out.size()) out.resize(f + 1);
      for (const auto& e : out[f])
        if (e.class_id == static_cast<std::size_t>(cls))
          throw FormatError("line " + std::to_string(lineno) + ": duplicate class in frame");
      out[f].push_back({static_cast<std::size_t>(cls), normalized(v)});
    } catch (const std::logic_error&) {
      throw FormatError("line " + std::to_string(lineno) + ": malformed row '" + line + "'");
    }
  }
  return out;
}

inline void save_annotation_csv(const std::string& path, const FrameAnnotation& ann) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path + "'");
  write_annotation_csv(os, ann);
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline FrameAnnotation load_annotation_csv(const std::string& path, std::size_t min_frames = 0) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_annotation_csv(is, min_frames);
}

}  // namespace seld
