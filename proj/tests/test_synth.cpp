// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "seld/synth.hpp"

using namespace seld;
namespace fs = std::filesystem;

namespace {

double energy(const AudioClip& clip, std::size_t c, std::size_t from, std::size_t to) {
  double acc = 0;
  for (std::size_t t = from; t < to; ++t) acc += clip.samples(c, t) * clip.samples(c, t);
  return acc;
}

EventSpec tone(std::size_t cls, double on, double off, double az = 0, double el = 0) {
  EventSpec e;
  e.class_id = cls;
  e.onset_s = on;
  e.offset_s = off;
  e.azimuth_deg = az;
  e.elevation_deg = el;
  std::tie(e.source_kind, e.base_freq_hz) = class_template(cls);
  return e;
}

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("seld_synth_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Foa, AxisGains) {
  auto near = [](std::array<double, 4> a, std::array<double, 4> b) {
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
  };
  near(foa_gains(0, 0), {1, 1, 0, 0});
  near(foa_gains(90, 0), {1, 0, 1, 0});
  near(foa_gains(0, 90), {1, 0, 0, 1});
  const auto x = encode_foa({0.5, -1.0}, 90, 0);
  EXPECT_EQ(x.shape(), (Shape{4, 2}));
  EXPECT_EQ(x(0, 1), -1.0);
  EXPECT_NEAR(x(2, 0), 0.5, 1e-15);
  EXPECT_THROW(encode_foa({1.0}, NAN, 0), InputError);
}

TEST(Scene, EmptyIsSilent) {
  SceneSpec spec;
  spec.duration_s = 1.0;
  const auto s = synth_scene(spec);
  EXPECT_EQ(s.clip.samples.shape(), (Shape{4, 16000}));
  for (double v : s.clip.samples.vec()) EXPECT_EQ(v, 0.0);
}

TEST(Scene, SingleToneEnergyConfinedToEvent) {
  SceneSpec spec;
  spec.duration_s = 3.0;
  spec.events = {tone(0, 1.0, 2.0)};
  const auto s = synth_scene(spec);
  const std::size_t fade = 160, on = 16000, off = 32000;
  double total = 0, inside = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    total += energy(s.clip, c, 0, 48000);
    inside += energy(s.clip, c, on - fade, off + fade);
  }
  EXPECT_GT(inside / total, 0.99);
  // Faded sine of amplitude A over N samples: A^2/2 * (N - 5F/4), since a
  // raised-cosine fade of F samples keeps 3F/8 of its squared gain.
  double peak = 0;
  for (double v : s.clip.samples.vec()) peak = std::max(peak, std::abs(v));
  EXPECT_NEAR(peak, 0.9, 1e-12);
  const double a = 0.9 / detail::peak(Tensor<double>({1, 1}, 1.0));  // sine peak is ~1 at 300 Hz
  const double want = a * a / 2 * (16000.0 - 5.0 * fade / 4);
  EXPECT_NEAR(energy(s.clip, 0, 0, 48000) / want, 1.0, 0.01);
}

TEST(Scene, DeterministicPerSeed) {
  SceneOptions opts;
  opts.duration_s = 4.0;
  const auto a = synth_scene(random_scene(3, opts, 11));
  const auto b = synth_scene(random_scene(3, opts, 11));
  const auto c = synth_scene(random_scene(3, opts, 12));
  EXPECT_EQ(a.clip.samples, b.clip.samples);
  EXPECT_FALSE(a.clip.samples == c.clip.samples);
}

TEST(Scene, OverlapViolationIsRejected) {
  SceneSpec spec;
  spec.duration_s = 5.0;
  spec.max_overlap = 2;
  spec.events = {tone(0, 0, 2), tone(1, 1, 3), tone(2, 1.5, 2.5)};
  EXPECT_THROW(synth_scene(spec), SpecError);
  spec.events = {tone(0, 0, 2), tone(1, 1, 3), tone(2, 2.0, 2.5)};  // touching is fine
  EXPECT_NO_THROW(synth_scene(spec));
  spec.events = {tone(0, 0, 6)};
  EXPECT_THROW(synth_scene(spec), SpecError);
  spec.events = {tone(0, 0, 1, 180, 0)};
  EXPECT_THROW(synth_scene(spec), SpecError);
  spec.events = {tone(0, 0, 1, 0, 70)};
  EXPECT_THROW(synth_scene(spec), SpecError);
}

TEST(Scene, RandomScenesRespectOverlapAndGrid) {
  for (std::size_t overlap = 1; overlap <= 3; ++overlap) {
    SceneOptions opts;
    opts.max_overlap = overlap;
    opts.events_per_scene = 12;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const auto spec = random_scene(4, opts, seed);
      EXPECT_LE(max_concurrent(spec.events), overlap);
      EXPECT_FALSE(same_class_overlap(spec.events));
      for (const auto& e : spec.events) {
        EXPECT_EQ(std::fmod(e.azimuth_deg, 10.0), 0.0);
        EXPECT_EQ(std::fmod(e.elevation_deg, 10.0), 0.0);
        EXPECT_LT(e.class_id, 4u);
        EXPECT_GT(e.offset_s, e.onset_s);
      }
      // Brute-force sweep on a 1 ms grid.
      for (double t = 0; t < opts.duration_s; t += 0.001) {
        std::size_t active = 0;
        for (const auto& e : spec.events) active += e.onset_s <= t && t < e.offset_s;
        ASSERT_LE(active, overlap);
      }
    }
  }
}

TEST(Scene, FoaEnergyRatiosMatchGains) {
  for (auto [az, el] : {std::pair{30.0, 20.0}, {-120.0, -40.0}, {170.0, 60.0}}) {
    SceneSpec spec;
    spec.duration_s = 2.0;
    spec.events = {tone(1, 0.2, 1.8, az, el)};  // noise burst
    const auto s = synth_scene(spec);
    const auto g = foa_gains(az, el);
    const double w = energy(s.clip, 0, 0, 32000);
    for (std::size_t c = 1; c < 4; ++c) EXPECT_NEAR(energy(s.clip, c, 0, 32000) / w, g[c] * g[c], 0.01);
  }
}

TEST(Scene, MovingSourceSweepsAzimuth) {
  EventSpec e = tone(0, 1.0, 3.0, -90, 0);
  e.azimuth_end_deg = 90;
  EXPECT_DOUBLE_EQ(e.azimuth_at(2.0), 0.0);
  EXPECT_DOUBLE_EQ(e.azimuth_at(0.0), -90.0);
  const auto targets = frame_targets({e}, 250, FrameTiming::stft(16000), 1);
  const std::size_t mid = static_cast<std::size_t>((2.0 - 0.016) / 0.016);
  EXPECT_NEAR(targets.doa(mid, 0), 1.0, 1e-3);
}

TEST(Dataset, TenScenesSplitSixTwoTwo) {
  const auto dir = temp_dir("ten");
  DatasetOptions opts;
  opts.scene.duration_s = 2.0;
  const auto m = make_dataset(10, 2, dir.string(), 7, opts);
  EXPECT_EQ(m.train.size(), 6u);
  EXPECT_EQ(m.val.size(), 2u);
  EXPECT_EQ(m.test.size(), 2u);
  EXPECT_EQ(read_lines(dir / "train.txt"), m.train);
  for (std::size_t i = 0; i < 10; ++i) {
    const std::string stem = "scene_00" + std::to_string(i);
    ASSERT_TRUE(fs::exists(dir / (stem + ".wav")));
    const auto events = load_event_csv((dir / (stem + ".csv")).string());
    for (const auto& e : events) EXPECT_LT(e.class_id, 2u);
    EXPECT_EQ(read_wav((dir / (stem + ".wav")).string()).channels(), 4u);
  }
  const auto manifest = slurp(dir / "test.txt");
  const auto scene3 = slurp(dir / "scene_003.wav");
  fs::remove_all(dir);
  make_dataset(10, 2, dir.string(), 7, opts);
  EXPECT_EQ(slurp(dir / "test.txt"), manifest);
  EXPECT_EQ(slurp(dir / "scene_003.wav"), scene3);
  fs::remove_all(dir);
}

TEST(Dataset, SplitSizesAndErrors) {
  EXPECT_EQ(split_sizes(10), (std::array<std::size_t, 3>{6, 2, 2}));
  EXPECT_EQ(split_sizes(5), (std::array<std::size_t, 3>{3, 1, 1}));
  EXPECT_EQ(split_sizes(12), (std::array<std::size_t, 3>{8, 2, 2}));
  EXPECT_THROW(make_dataset(4, 2, temp_dir("few").string(), 1), InputError);
  EXPECT_THROW(make_dataset(5, 2, "/proc/seld_cannot_write", 1), IoError);
}

TEST(EventCsv, RoundTrip) {
  std::vector<EventSpec> events = {tone(0, 0.25, 1.5, -180, 10), tone(2, 1.0, 2.125, 170, -60)};
  std::stringstream ss;
  write_event_csv(ss, events);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), kEventCsvHeader);
  EXPECT_EQ(read_event_csv(ss), events);

  events[1].azimuth_end_deg = 20;
  std::stringstream mv;
  write_event_csv(mv, events);
  EXPECT_EQ(read_event_csv(mv), events);

  std::stringstream bad("onset_s,offset_s,class_id,azimuth_deg,elevation_deg\n1,2,x,0,0\n");
  EXPECT_THROW(read_event_csv(bad), FormatError);
  std::stringstream bad_header("a,b\n");
  EXPECT_THROW(read_event_csv(bad_header), FormatError);
}

TEST(Targets, Examples) {
  const FrameTiming timing{0.1, 0.05};
  const auto t = frame_targets({tone(1, 1.0, 2.1)}, 30, timing, 2);
  std::size_t active = 0;
  for (std::size_t f = 0; f < 30; ++f) active += t.sed(f, 1) == 1.0f;
  // centers 1.05 .. 2.05 -> frames 10..20
  EXPECT_EQ(active, 11u);
  EXPECT_EQ(t.sed(10, 1), 1.0f);
  EXPECT_EQ(t.sed(20, 1), 1.0f);
  EXPECT_EQ(t.sed(21, 1), 0.0f);
  EXPECT_NEAR(t.doa(15, 3), 1.0f, 1e-7);
  EXPECT_EQ(t.doa(15, 4), 0.0f);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(t.doa(5, k), 0.0f);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(t.sed(5, k), 0.0f);
  EXPECT_THROW(frame_targets({tone(2, 0, 1)}, 10, timing, 2), DataError);
  EXPECT_THROW(frame_targets({tone(0, 0, 1), tone(0, 0.5, 1.5)}, 10, timing, 2), DataError);
}

TEST(Targets, UnitVectorConvention) {
  const auto t = frame_targets({tone(0, 0, 1, 90, 30)}, 5, FrameTiming{0.1, 0.05}, 1);
  EXPECT_NEAR(t.doa(2, 0), 0.0, 1e-7);
  EXPECT_NEAR(t.doa(2, 1), std::cos(std::numbers::pi / 6), 1e-7);
  EXPECT_NEAR(t.doa(2, 2), 0.5, 1e-7);
}

TEST(RoundTrip, SynthTargetsMetricsSelfEvaluation) {
  SceneOptions opts;
  opts.duration_s = 8.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto scene = synth_scene(random_scene(4, opts, seed));
    const std::size_t frames = stft_frame_count(scene.clip.frames());
    const auto targets = frame_targets(scene.annotations, frames, FrameTiming::stft(16000), 4);
    const auto ref = reference_annotation(targets);
    const auto r = evaluate(ref, ref, 4, frames_per_second(16000, 256));
    ASSERT_TRUE(r.er);
    EXPECT_EQ(*r.er, 0.0);
    EXPECT_EQ(r.f1, 1.0);
    EXPECT_EQ(r.fr, 100.0);
    ASSERT_TRUE(r.de);
    EXPECT_EQ(*r.de, 0.0);
  }
}
