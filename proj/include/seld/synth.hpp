// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "seld/audio.hpp"
#include "seld/error.hpp"
#include "seld/metrics.hpp"
#include "seld/random.hpp"
#include "seld/tensor.hpp"

namespace seld {

enum class SourceKind { tone, noise_burst, chirp };

inline const char* to_string(SourceKind k) {
  switch (k) {
    case SourceKind::tone: return "tone";
    case SourceKind::noise_burst: return "noise_burst";
    case SourceKind::chirp: return "chirp";
  }
  return "?";
}

struct EventSpec {
  std::size_t class_id = 0;
  double onset_s = 0.0;
  double offset_s = 0.0;
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  /// Azimuth at offset for a moving source; NaN for a static one.
  double azimuth_end_deg = NAN;
  SourceKind source_kind = SourceKind::tone;
  double base_freq_hz = 300.0;

  bool moving() const { return !std::isnan(azimuth_end_deg); }

  /// Azimuth at time t, linearly interpolated for moving sources.
  double azimuth_at(double t) const {
    if (!moving() || offset_s <= onset_s) return azimuth_deg;
    const double a = std::clamp((t - onset_s) / (offset_s - onset_s), 0.0, 1.0);
    return azimuth_deg + a * (azimuth_end_deg - azimuth_deg);
  }

  bool operator==(const EventSpec& o) const {
    const bool end_eq = (moving() && o.moving() && azimuth_end_deg == o.azimuth_end_deg) || (!moving() && !o.moving());
    return class_id == o.class_id && onset_s == o.onset_s && offset_s == o.offset_s && azimuth_deg == o.azimuth_deg &&
           elevation_deg == o.elevation_deg && end_eq && source_kind == o.source_kind && base_freq_hz == o.base_freq_hz;
  }
};

struct SceneSpec {
  double duration_s = 10.0;
  std::uint32_t sample_rate_hz = 16000;
  std::vector<EventSpec> events;
  std::size_t max_overlap = 3;
  std::uint64_t seed = 0;
};

inline std::array<double, 3> unit_vector(double azimuth_deg, double elevation_deg) {
  const double az = azimuth_deg * std::numbers::pi / 180.0, el = elevation_deg * std::numbers::pi / 180.0;
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

/// FOA gains in W, X, Y, Z order with W unscaled.
inline std::array<double, 4> foa_gains(double azimuth_deg, double elevation_deg) {
  const auto u = unit_vector(azimuth_deg, elevation_deg);
  return {1.0, u[0], u[1], u[2]};
}

inline Tensor<double> encode_foa(const std::vector<double>& mono, double azimuth_deg, double elevation_deg) {
  if (!std::isfinite(azimuth_deg) || !std::isfinite(elevation_deg)) throw InputError("FOA angles must be finite");
  if (mono.empty()) throw InputError("cannot encode an empty signal");
  const auto g = foa_gains(azimuth_deg, elevation_deg);
  Tensor<double> out({4, mono.size()});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = 0; t < mono.size(); ++t) out(c, t) = g[c] * mono[t];
  return out;
}

/// Class c maps to a fixed source template: kind cycles tone, noise burst,
/// chirp and the base frequency is 300 (c + 1) Hz.
inline std::pair<SourceKind, double> class_template(std::size_t class_id) {
  static constexpr SourceKind kinds[] = {SourceKind::tone, SourceKind::noise_burst, SourceKind::chirp};
  return {kinds[class_id % 3], 300.0 * static_cast<double>(class_id + 1)};
}

namespace detail {

inline std::size_t to_sample(double t, std::uint32_t rate) {
  return static_cast<std::size_t>(std::llround(t * rate));
}

inline std::vector<double> render_source(const EventSpec& e, std::size_t n, std::uint32_t rate, Rng& rng) {
  std::vector<double> s(n);
  const double fs = rate, two_pi = 2.0 * std::numbers::pi;
  const double f0 = std::min(e.base_freq_hz, 0.45 * fs);
  switch (e.source_kind) {
    case SourceKind::tone:
      for (std::size_t i = 0; i < n; ++i) s[i] = std::sin(two_pi * f0 * i / fs);
      break;
    case SourceKind::chirp: {
      const double f1 = std::min(3.0 * f0, 0.45 * fs), dur = n / fs;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = i / fs;
        s[i] = std::sin(two_pi * (f0 * t + 0.5 * (f1 - f0) * t * t / dur));
      }
      break;
    }
    case SourceKind::noise_burst: {
      // White noise through a band-pass biquad centred on the base frequency.
      const double w0 = two_pi * f0 / fs, alpha = std::sin(w0) / (2.0 * 2.0);
      const double a0 = 1 + alpha, a1 = -2 * std::cos(w0) / a0, a2 = (1 - alpha) / a0, b0 = alpha / a0;
      double x1 = 0, x2 = 0, y1 = 0, y2 = 0, power = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.gaussian();
        const double y = b0 * x - b0 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
        s[i] = y;
        power += y * y;
      }
      // Match a unit sine's RMS.
      const double g = power > 0 ? std::sqrt(0.5 * n / power) : 0.0;
      for (auto& v : s) v *= g;
      break;
    }
  }
  const std::size_t fade = std::min(to_sample(0.010, rate), n / 2);
  for (std::size_t i = 0; i < fade; ++i) {
    const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * (i + 0.5) / fade);
    s[i] *= w;
    s[n - 1 - i] *= w;
  }
  return s;
}

}  // namespace detail

/// Largest number of events active at any instant, on half-open intervals.
inline std::size_t max_concurrent(const std::vector<EventSpec>& events) {
  std::vector<std::pair<double, int>> edges;
  for (const auto& e : events) {
    edges.emplace_back(e.onset_s, +1);
    edges.emplace_back(e.offset_s, -1);
  }
  // Offsets sort before onsets at equal times.
  std::sort(edges.begin(), edges.end());
  std::size_t best = 0;
  long active = 0;
  for (const auto& [t, d] : edges) {
    active += d;
    best = std::max(best, static_cast<std::size_t>(std::max(0L, active)));
  }
  return best;
}

inline bool same_class_overlap(const std::vector<EventSpec>& events) {
  for (std::size_t i = 0; i < events.size(); ++i)
    for (std::size_t j = i + 1; j < events.size(); ++j)
      if (events[i].class_id == events[j].class_id && events[i].onset_s < events[j].offset_s &&
          events[j].onset_s < events[i].offset_s)
        return true;
  return false;
}

inline void validate_scene(const SceneSpec& spec) {
  if (!(spec.duration_s > 0) || !std::isfinite(spec.duration_s)) throw SpecError("scene duration must be positive");
  if (spec.sample_rate_hz == 0) throw SpecError("sample rate must be positive");
  if (spec.max_overlap < 1 || spec.max_overlap > 3) throw SpecError("max_overlap must lie in [1, 3]");
  for (const auto& e : spec.events) {
    if (!(e.offset_s > e.onset_s) || e.onset_s < 0 || e.offset_s > spec.duration_s)
      throw SpecError("event times [" + std::to_string(e.onset_s) + ", " + std::to_string(e.offset_s) +
                      ") outside the scene or empty");
    for (double az : {e.azimuth_deg, e.moving() ? e.azimuth_end_deg : e.azimuth_deg})
      if (!(az >= -180.0 && az < 180.0)) throw SpecError("azimuth " + std::to_string(az) + " outside [-180, 180)");
    if (!(e.elevation_deg >= -60.0 && e.elevation_deg <= 60.0))
      throw SpecError("elevation " + std::to_string(e.elevation_deg) + " outside [-60, 60]");
    if (!(e.base_freq_hz > 0) || !std::isfinite(e.base_freq_hz)) throw SpecError("base frequency must be positive");
  }
  if (max_concurrent(spec.events) > spec.max_overlap)
    throw SpecError("more than " + std::to_string(spec.max_overlap) + " events overlap");
}

struct Scene {
  AudioClip clip;
  std::vector<EventSpec> annotations;
};

/// Renders every event, encodes it to FOA, sums and peak-normalises to 0.9.
inline Scene synth_scene(const SceneSpec& spec) {
  validate_scene(spec);
  const std::size_t total = detail::to_sample(spec.duration_s, spec.sample_rate_hz);
  if (total == 0) throw SpecError("scene shorter than one sample");
  Scene scene;
  scene.annotations = spec.events;
  scene.clip.sample_rate_hz = spec.sample_rate_hz;
  scene.clip.samples = Tensor<double>({4, total});
  for (std::size_t k = 0; k < spec.events.size(); ++k) {
    const auto& e = spec.events[k];
    const std::size_t start = detail::to_sample(e.onset_s, spec.sample_rate_hz);
    const std::size_t stop = std::min(total, detail::to_sample(e.offset_s, spec.sample_rate_hz));
    if (stop <= start) continue;
    Rng rng(mix_seed(spec.seed, k));
    const auto s = detail::render_source(e, stop - start, spec.sample_rate_hz, rng);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double t = static_cast<double>(start + i) / spec.sample_rate_hz;
      const auto g = foa_gains(e.azimuth_at(t), e.elevation_deg);
      for (std::size_t c = 0; c < 4; ++c) scene.clip.samples(c, start + i) += g[c] * s[i];
    }
  }
  const double peak = detail::peak(scene.clip.samples);
  if (peak > 0) {
    const double g = 0.9 / peak;
    for (auto& v : scene.clip.samples.vec()) v *= g;
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Random scenes and datasets

struct SceneOptions {
  double duration_s = 10.0;
  std::uint32_t sample_rate_hz = 16000;
  std::size_t max_overlap = 3;
  std::size_t events_per_scene = 8;
  double min_event_s = 0.5;
  double max_event_s = 2.0;
  bool grid = true;            // angles on a 10 degree grid
  double max_elevation_deg = 60.0;
  double max_azimuth_deg = 180.0;  // azimuths drawn from [-max, max)
  bool moving = false;         // linear azimuth trajectories
};

inline EventSpec random_event(std::size_t class_count, const SceneOptions& opts, Rng& rng) {
  EventSpec e;
  e.class_id = rng.below(class_count);
  std::tie(e.source_kind, e.base_freq_hz) = class_template(e.class_id);
  const double len = rng.uniform(opts.min_event_s, opts.max_event_s);
  e.onset_s = std::floor(rng.uniform(0.0, std::max(0.0, opts.duration_s - len)) * 1000.0) / 1000.0;
  e.offset_s = std::min(opts.duration_s, std::round((e.onset_s + len) * 1000.0) / 1000.0);
  // Closed range on the grid; the grid step is excluded from the top of
  // half-open ranges.
  auto angle = [&](double lo, double hi, bool half_open) {
    if (!opts.grid) return rng.uniform(lo, hi);
    const auto steps = static_cast<std::size_t>(std::floor((hi - lo) / 10.0)) - (half_open ? 1 : 0);
    return lo + 10.0 * static_cast<double>(rng.below(steps + 1));
  };
  const double az = std::clamp(opts.max_azimuth_deg, 10.0, 180.0);
  e.azimuth_deg = angle(-az, az, true);
  e.elevation_deg = angle(-opts.max_elevation_deg, opts.max_elevation_deg, false);
  if (opts.moving) e.azimuth_end_deg = angle(-az, az, true);
  return e;
}

/// Draws events one at a time and keeps those that respect the overlap
/// limits (no more than max_overlap at once, no class overlapping itself).
inline SceneSpec random_scene(std::size_t class_count, const SceneOptions& opts, std::uint64_t seed) {
  if (class_count == 0) throw InputError("class_count must be positive");
  Rng rng(seed);
  SceneSpec spec;
  spec.duration_s = opts.duration_s;
  spec.sample_rate_hz = opts.sample_rate_hz;
  spec.max_overlap = opts.max_overlap;
  spec.seed = seed;
  for (std::size_t attempt = 0; attempt < 50 * opts.events_per_scene && spec.events.size() < opts.events_per_scene;
       ++attempt) {
    spec.events.push_back(random_event(class_count, opts, rng));
    if (max_concurrent(spec.events) > opts.max_overlap || same_class_overlap(spec.events)) spec.events.pop_back();
  }
  std::sort(spec.events.begin(), spec.events.end(),
            [](const EventSpec& a, const EventSpec& b) { return a.onset_s < b.onset_s; });
  return spec;
}

inline constexpr const char* kEventCsvHeader = "onset_s,offset_s,class_id,azimuth_deg,elevation_deg";

inline void write_event_csv(std::ostream& os, const std::vector<EventSpec>& events) {
  const bool moving = std::any_of(events.begin(), events.end(), [](const EventSpec& e) { return e.moving(); });
  os << kEventCsvHeader << (moving ? ",azimuth_end_deg" : "") << '\n';
  os << std::setprecision(10);
  for (const auto& e : events) {
    os << e.onset_s << ',' << e.offset_s << ',' << e.class_id << ',' << e.azimuth_deg << ',' << e.elevation_deg;
    if (moving) os << ',' << (e.moving() ? e.azimuth_end_deg : e.azimuth_deg);
    os << '\n';
  }
}

/// Reads an annotation CSV; source kind and frequency come from the class template.
inline std::vector<EventSpec> read_event_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty event CSV (header required)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool moving = false;
  if (line == std::string(kEventCsvHeader) + ",azimuth_end_deg") {
    moving = true;
  } else if (line != kEventCsvHeader) {
    throw FormatError("bad event CSV header '" + line + "'");
  }
  std::vector<EventSpec> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != (moving ? 6u : 5u))
      throw FormatError("line " + std::to_string(lineno) + ": expected " + (moving ? "6" : "5") + " fields");
    try {
      auto num = [&](const std::string& s) {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
      };
      EventSpec e;
      e.onset_s = num(cells[0]);
      e.offset_s = num(cells[1]);
      const double cls = num(cells[2]);
      if (cls < 0 || cls != std::floor(cls)) throw std::invalid_argument(cells[2]);
      e.class_id = static_cast<std::size_t>(cls);
      e.azimuth_deg = num(cells[3]);
      e.elevation_deg = num(cells[4]);
      if (moving) {
        const double end = num(cells[5]);
        if (end != e.azimuth_deg) e.azimuth_end_deg = end;
      }
      std::tie(e.source_kind, e.base_freq_hz) = class_template(e.class_id);
      out.push_back(e);
    } catch (const std::logic_error&) {
      throw FormatError("line " + std::to_string(lineno) + ": malformed row '" + line + "'");
    }
  }
  return out;
}

inline std::vector<EventSpec> load_event_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_event_csv(is);
}

struct DatasetOptions {
  SceneOptions scene;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
};

struct DatasetManifest {
  std::vector<std::string> train, val, test;
};

/// Split sizes for n scenes: val = test = floor(0.2 n), train takes the rest.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, double val_fraction = 0.2) {
  const auto v = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n) + 1e-9));
  return {n - 2 * v, v, v};
}

inline void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& l : lines) os << l << '\n';
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

/// Writes scene_XXX.wav / scene_XXX.csv pairs plus train/val/test manifests.
inline DatasetManifest make_dataset(std::size_t n_scenes, std::size_t class_count, const std::string& out_dir,
                                    std::uint64_t seed, const DatasetOptions& opts = {}) {
  if (n_scenes < 5) throw InputError("make_dataset needs at least 5 scenes");
  if (class_count == 0) throw InputError("class_count must be positive");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create dataset directory '" + out_dir + "'");

  std::vector<std::string> names(n_scenes);
  for (std::size_t i = 0; i < n_scenes; ++i) {
    std::ostringstream name;
    name << "scene_" << std::setw(3) << std::setfill('0') << i;
    names[i] = name.str();
    const auto spec = random_scene(class_count, opts.scene, mix_seed(seed, i));
    const auto scene = synth_scene(spec);
    write_wav((fs::path(out_dir) / (names[i] + ".wav")).string(), scene.clip, WavEncoding::float32);
    std::ofstream csv(fs::path(out_dir) / (names[i] + ".csv"));
    if (!csv) throw IoError("cannot write annotations in '" + out_dir + "'");
    write_event_csv(csv, scene.annotations);
  }

  std::vector<std::size_t> order(n_scenes);
  for (std::size_t i = 0; i < n_scenes; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5EED));
  for (std::size_t i = n_scenes - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const auto sizes = split_sizes(n_scenes, opts.val_fraction);
  DatasetManifest m;
  for (std::size_t k = 0; k < n_scenes; ++k) {
    auto& list = k < sizes[0] ? m.train : (k < sizes[0] + sizes[1] ? m.val : m.test);
    list.push_back(names[order[k]] + ".wav");
  }
  for (auto* l : {&m.train, &m.val, &m.test}) std::sort(l->begin(), l->end());
  write_lines(fs::path(out_dir) / "train.txt", m.train);
  write_lines(fs::path(out_dir) / "val.txt", m.val);
  write_lines(fs::path(out_dir) / "test.txt", m.test);
  return m;
}

// ---------------------------------------------------------------------------
// Frame targets

/// Maps frame index to time: center(t) = t * hop_s + offset_s.
struct FrameTiming {
  double hop_s = 256.0 / 16000.0;
  double offset_s = 256.0 / 16000.0;  // half of a 512-sample window

  static FrameTiming stft(std::uint32_t sample_rate_hz, std::size_t win_len = 512, std::size_t hop = 256) {
    return {static_cast<double>(hop) / sample_rate_hz, 0.5 * static_cast<double>(win_len) / sample_rate_hz};
  }
  double center(std::size_t t) const { return static_cast<double>(t) * hop_s + offset_s; }
};

struct FrameTargets {
  Tensor<float> sed;  // (T, N)
  Tensor<float> doa;  // (T, 3N)
};

inline FrameTargets frame_targets(const std::vector<EventSpec>& events, std::size_t n_frames, const FrameTiming& timing,
                                  std::size_t n_sed) {
  if (n_frames == 0 || n_sed == 0) throw InputError("frame_targets needs positive frame and class counts");
  FrameTargets out{Tensor<float>({n_frames, n_sed}), Tensor<float>({n_frames, 3 * n_sed})};
  for (const auto& e : events)
    if (e.class_id >= n_sed)
      throw DataError("class id " + std::to_string(e.class_id) + " outside [0, " + std::to_string(n_sed) + ")");
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double c = timing.center(t);
    for (const auto& e : events) {
      if (!(e.onset_s <= c && c < e.offset_s)) continue;
      if (out.sed(t, e.class_id) != 0.0f)
        throw DataError("two events of class " + std::to_string(e.class_id) + " overlap");
      out.sed(t, e.class_id) = 1.0f;
      const auto u = unit_vector(e.azimuth_at(c), e.elevation_deg);
      for (std::size_t k = 0; k < 3; ++k) out.doa(t, 3 * e.class_id + k) = static_cast<float>(u[k]);
    }
  }
  return out;
}

/// Reference annotation for the metric suite, built from frame targets.
inline FrameAnnotation reference_annotation(const FrameTargets& targets) {
  const Prediction<float> p{targets.sed, targets.doa};
  return doa_vectors_from_prediction(p, binarize_sed(targets.sed));
}

}  // namespace seld
