// SPDX-License-Identifier: Apache-2.0
// seld: dataset synthesis, training, inference, scoring and benchmarking.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "seld/alloc.hpp"
#include "seld/bench.hpp"
#include "seld/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SELD_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("SELD_SEED is not an unsigned integer: '") + env + "'");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Shared augmentation flags for featurize and infer.

struct AugmentFlags {
  std::optional<double> snr_db;
  std::string noise_kind = "awgn";
  std::string noise_wav;
  std::optional<double> reverb;
  std::optional<std::uint32_t> sample_rate_hz;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--snr", snr_db, "Add noise at this SNR in dB");
    cmd->add_option("--noise-kind", noise_kind, "awgn or file")->check(CLI::IsMember({"awgn", "file"}));
    cmd->add_option("--noise-wav", noise_wav, "Noise recording for --noise-kind file");
    cmd->add_option("--reverb", reverb, "Reverb strength (RT60 = strength / 100 s)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--sr", sample_rate_hz, "Resample to this rate before the STFT")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Augmentation seed (falls back to SELD_SEED)");
  }

  seld::FeaturePipeline pipeline(std::uint32_t default_rate, std::optional<seld::AudioClip>& noise_store) const {
    seld::FeaturePipeline p;
    p.sample_rate_hz = sample_rate_hz.value_or(default_rate);
    const std::uint64_t s = resolve_seed(seed);
    if (snr_db) {
      seld::AugmentSpec n;
      n.snr_db = *snr_db;
      n.rng_seed = s;
      if (noise_kind == "file") {
        if (noise_wav.empty()) throw UsageError("--noise-kind file needs --noise-wav");
        n.kind = seld::AugmentKind::noise_file;
        noise_store = seld::read_wav(noise_wav);
        if (noise_store->sample_rate_hz != p.sample_rate_hz)
          noise_store = seld::resample(*noise_store, p.sample_rate_hz);
        p.noise_clip = &*noise_store;
      }
      p.noise = n;
    } else if (noise_kind == "file" || !noise_wav.empty()) {
      throw UsageError("noise options need --snr");
    }
    if (reverb) {
      seld::AugmentSpec r;
      r.kind = seld::AugmentKind::reverb;
      r.reverb_strength = *reverb;
      r.rng_seed = seld::mix_seed(s, 1);
      p.reverb = r;
    }
    return p;
  }
};

void write_feature_csv(std::ostream& os, const seld::Tensor<float>& f) {
  os << "channel,frame";
  for (std::size_t b = 0; b < f.dim(2); ++b) os << ",bin_" << b + 1;
  os << "\n" << std::setprecision(9);
  for (std::size_t c = 0; c < f.dim(0); ++c)
    for (std::size_t t = 0; t < f.dim(1); ++t) {
      os << c << ',' << t;
      const float* row = f.data() + (c * f.dim(1) + t) * f.dim(2);
      for (std::size_t b = 0; b < f.dim(2); ++b) os << ',' << row[b];
      os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Reference loading for eval: annotation CSVs or generator event CSVs.

bool is_event_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw seld::IoError("cannot open '" + path + "'");
  std::string header;
  std::getline(in, header);
  return header.rfind("onset_s", 0) == 0;
}

std::size_t last_frame_of(const std::vector<seld::EventSpec>& events, const seld::FrameTiming& timing) {
  double end = 0.0;
  for (const auto& e : events) end = std::max(end, e.offset_s);
  if (end <= timing.offset_s) return 0;
  return static_cast<std::size_t>(std::ceil((end - timing.offset_s) / timing.hop_s)) + 1;
}

void print_report(std::ostream& os, const seld::EvalReport& r) {
  os << std::fixed << std::setprecision(2);
  os << "ER  " << (r.er ? (std::ostringstream() << std::fixed << std::setprecision(2) << *r.er).str() : "n/a") << "\n";
  os << std::setprecision(1);
  os << "F1  " << 100.0 * r.f1 << "\n";
  os << "FR  " << r.fr << "\n";
  os << "DE  " << (r.de ? (std::ostringstream() << std::fixed << std::setprecision(1) << *r.de).str() : "n/a") << "\n";
}

void write_eval_report(std::ostream& os, const seld::EvalReport& r, const seld::Evaluator& ev) {
  os << std::setprecision(17);
  os << "er = ";
  if (r.er)
    os << *r.er << "\n";
  else
    os << "absent\n";
  os << "f1 = " << r.f1 << "\n"
     << "fr = " << r.fr << "\n"
     << "de = ";
  if (r.de)
    os << *r.de << "\n";
  else
    os << "absent\n";
  const auto& s = ev.segment();
  os << "tp = " << s.tp << "\nfp = " << s.fp << "\nfn = " << s.fn << "\nsubstitutions = " << s.substitutions
     << "\ndeletions = " << s.deletions << "\ninsertions = " << s.insertions << "\nn_ref = " << s.n_ref
     << "\nsegments = " << s.segments << "\n";
  const auto& l = ev.localization();
  os << "frames = " << l.frames << "\nframes_count_match = " << l.frames_count_match << "\npairs = " << l.pairs << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  seld::keep_large_allocations();
  CLI::App app{"Sound event localization and detection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "seld 1.0.0");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic FOA dataset");
  std::size_t synth_scenes = 10, synth_classes = 2;
  std::string synth_out;
  std::optional<std::uint64_t> synth_seed;
  seld::DatasetOptions synth_opts;
  synth->add_option("--scenes", synth_scenes, "Number of scenes")->check(CLI::PositiveNumber);
  synth->add_option("--classes", synth_classes, "Number of sound classes")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Generator seed (falls back to SELD_SEED)");
  synth->add_option("--duration", synth_opts.scene.duration_s, "Scene length in seconds")->check(CLI::PositiveNumber);
  synth->add_option("--sr", synth_opts.scene.sample_rate_hz, "Sample rate")->check(CLI::PositiveNumber);
  synth->add_option("--events", synth_opts.scene.events_per_scene, "Events attempted per scene");
  synth->add_option("--max-overlap", synth_opts.scene.max_overlap, "Maximum concurrent events")
      ->check(CLI::Range(1, 3));
  synth->add_option("--max-elevation", synth_opts.scene.max_elevation_deg, "Elevation range limit in degrees")
      ->check(CLI::Range(0.0, 60.0));
  synth->add_option("--max-azimuth", synth_opts.scene.max_azimuth_deg, "Azimuths drawn from [-max, max) degrees")
      ->check(CLI::Range(10.0, 180.0));
  synth->add_flag("--moving", synth_opts.scene.moving, "Linear azimuth trajectories");

  // train
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  std::string train_config, train_model = "seldtcn", train_out, train_log;
  train->add_option("--config", train_config, "Run config (key = value)")->required();
  train->add_option("--model", train_model, "Model kind")->check(CLI::IsMember({"seldtcn", "seldnet"}));
  train->add_option("--out", train_out, "Output weights file")->required();
  train->add_option("--log", train_log, "Epoch log CSV (default <out>.log.csv)");

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions against a reference");
  std::string eval_pred, eval_ref, eval_report;
  double eval_sr = 16000;
  std::size_t eval_hop = 256, eval_win = 512, eval_frames = 0, eval_classes = 0;
  eval->add_option("--pred", eval_pred, "Predicted annotation CSV")->required();
  eval->add_option("--ref", eval_ref, "Reference annotation CSV or event CSV")->required();
  eval->add_option("--sr", eval_sr, "Sample rate of the analysed audio")->check(CLI::PositiveNumber);
  eval->add_option("--hop", eval_hop, "STFT hop in samples")->check(CLI::PositiveNumber);
  eval->add_option("--win", eval_win, "STFT window, used to place frames of an event CSV")->check(CLI::PositiveNumber);
  eval->add_option("--frames", eval_frames, "Total frame count (trailing silent frames count toward FR)");
  eval->add_option("--classes", eval_classes, "Class count (default: largest id seen + 1)");
  eval->add_option("--report", eval_report, "Key-value report path (default <pred>.report.txt)");

  // bench
  auto* bench = app.add_subcommand("bench", "Time forward passes on random input");
  std::string bench_model = "seldtcn", bench_config, bench_report;
  seld::BenchOptions bench_opts;
  std::optional<std::uint64_t> bench_seed;
  bench->add_option("--model", bench_model, "Model kind")->check(CLI::IsMember({"seldtcn", "seldnet"}));
  bench->add_option("--seq-len", bench_opts.seq_len, "Frames per input")->check(CLI::PositiveNumber);
  bench->add_option("--repeats", bench_opts.repeats, "Timed runs (at least 3)")->check(CLI::Range(3, 1000000));
  bench->add_option("--warmup", bench_opts.warmup, "Untimed runs first");
  bench->add_option("--threads", bench_opts.threads, "Kernel threads")->check(CLI::Range(1, 1024));
  bench->add_option("--config", bench_config, "Model config (default architecture otherwise)");
  bench->add_option("--seed", bench_seed, "Weight and input seed (falls back to SELD_SEED)");
  bench->add_option("--report", bench_report, "Key-value report path");

  // featurize / infer
  auto* featurize = app.add_subcommand("featurize", "Write STFT features of a WAV file as CSV");
  std::string feat_wav, feat_out;
  AugmentFlags feat_aug;
  featurize->add_option("--wav", feat_wav, "Input WAV")->required();
  featurize->add_option("--out", feat_out, "Output CSV")->required();
  feat_aug.attach(featurize);

  auto* infer = app.add_subcommand("infer", "Predict events and directions for a WAV file");
  std::string infer_weights, infer_wav, infer_out;
  double infer_threshold = 0.5;
  AugmentFlags infer_aug;
  infer->add_option("--weights", infer_weights, "Trained weights (config read from <weights>.cfg)")->required();
  infer->add_option("--wav", infer_wav, "Input WAV")->required();
  infer->add_option("--out", infer_out, "Output annotation CSV")->required();
  infer->add_option("--threshold", infer_threshold, "SED activity threshold")->check(CLI::Range(0.0, 1.0));
  infer_aug.attach(infer);

  // count
  auto* count = app.add_subcommand("count", "Print parameter and MAC counts");
  std::string count_model = "seldtcn", count_config;
  std::size_t count_frames = 512;
  count->add_option("--model", count_model, "Model kind")->check(CLI::IsMember({"seldtcn", "seldnet"}));
  count->add_option("--config", count_config, "Model config (default architecture otherwise)");
  count->add_option("--frames", count_frames, "Sequence length for MACs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) {
      const auto m = seld::make_dataset(synth_scenes, synth_classes, synth_out, resolve_seed(synth_seed), synth_opts);
      std::cout << "wrote " << synth_scenes << " scenes to " << synth_out << " (train " << m.train.size() << ", val "
                << m.val.size() << ", test " << m.test.size() << ")\n";
    } else if (*train) {
      if (train_model == "seldnet")
        throw seld::UnsupportedError("seldnet is inference-only here; train seldtcn instead");
      const auto cfg = seld::load_run_config(train_config);
      const std::string log_path = train_log.empty() ? train_out + ".log.csv" : train_log;
      std::ofstream log(log_path);
      if (!log) throw seld::IoError("cannot write '" + log_path + "'");
      log << "epoch,train_loss,val_loss,seconds\n" << std::setprecision(9);
      auto trained = seld::train_from_config(cfg, [&](const seld::EpochLog& e) {
        log << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.seconds << '\n' << std::flush;
        std::cout << "epoch " << e.epoch << "  train " << e.train_loss << "  val " << e.val_loss << "  ("
                  << std::setprecision(3) << e.seconds << " s)\n"
                  << std::setprecision(9);
      });
      seld::save_trained(train_out, *trained.model, trained.norm, trained.sample_rate_hz);
      std::cout << "best epoch " << trained.result.best_epoch << " of " << trained.result.log.size()
                << ", val loss " << trained.result.best_val_loss << "\nweights " << train_out << "\nconfig "
                << seld::config_path_for(train_out) << "\nlog " << log_path << "\n";
    } else if (*eval) {
      const std::size_t fps = seld::frames_per_second(eval_sr, static_cast<double>(eval_hop));
      seld::FrameAnnotation pred = seld::load_annotation_csv(eval_pred, eval_frames);
      seld::FrameAnnotation ref;
      if (is_event_csv(eval_ref)) {
        const auto events = seld::load_event_csv(eval_ref);
        const auto timing = seld::FrameTiming::stft(static_cast<std::uint32_t>(eval_sr), eval_win, eval_hop);
        std::size_t classes = eval_classes;
        for (const auto& e : events) classes = std::max(classes, e.class_id + 1);
        const std::size_t frames = std::max({eval_frames, pred.size(), last_frame_of(events, timing), std::size_t{1}});
        ref = seld::reference_annotation(seld::frame_targets(events, frames, timing, std::max<std::size_t>(classes, 1)));
      } else {
        ref = seld::load_annotation_csv(eval_ref, eval_frames);
      }
      if (eval_frames == 0) {
        std::cerr << "warning: --frames not given; scoring " << std::max(pred.size(), ref.size())
                  << " frames, the last annotated one. Trailing silent frames are not counted.\n";
      }
      const std::size_t frames = std::max(pred.size(), ref.size());
      pred.resize(frames);
      ref.resize(frames);
      std::size_t classes = eval_classes;
      for (const auto* ann : {&pred, &ref})
        for (const auto& f : *ann)
          for (const auto& e : f) classes = std::max(classes, e.class_id + 1);
      seld::Evaluator ev(std::max<std::size_t>(classes, 1), fps);
      ev.add(pred, ref);
      const auto r = ev.report();
      if (!r.er) std::cerr << "warning: the reference has no active events; ER is undefined and reported absent\n";
      print_report(std::cout, r);
      const std::string report_path = eval_report.empty() ? eval_pred + ".report.txt" : eval_report;
      std::ofstream rep(report_path);
      if (!rep) throw seld::IoError("cannot write '" + report_path + "'");
      write_eval_report(rep, r, ev);
    } else if (*bench) {
      bench_opts.kind = seld::parse_model_kind(bench_model);
      if (!bench_config.empty()) bench_opts.config = seld::load_run_config(bench_config).model;
      bench_opts.seed = resolve_seed(bench_seed);
      const auto r = seld::run_bench(bench_opts);
      std::cout << std::setprecision(6) << "model " << bench_model << "  seq_len " << r.seq_len << "  threads "
                << r.threads << "\nmean " << r.mean_s << " s  p50 " << r.p50_s << " s over " << r.repeats
                << " runs\nparams " << r.params << "  MACs " << r.macs << "\n";
      if (!bench_report.empty()) {
        std::ofstream rep(bench_report);
        if (!rep) throw seld::IoError("cannot write '" + bench_report + "'");
        seld::write_bench_report(rep, r);
      }
    } else if (*featurize) {
      std::optional<seld::AudioClip> noise;
      const auto clip = seld::read_wav(feat_wav);
      const auto pipe = feat_aug.pipeline(clip.sample_rate_hz, noise);
      const auto f = pipe.features(clip);
      std::ofstream out(feat_out);
      if (!out) throw seld::IoError("cannot write '" + feat_out + "'");
      write_feature_csv(out, f);
      std::cout << "features " << f.dim(0) << " x " << f.dim(1) << " x " << f.dim(2) << " at " << pipe.sample_rate_hz
                << " Hz -> " << feat_out << "\n";
    } else if (*infer) {
      auto loaded = seld::load_trained(infer_weights);
      std::optional<seld::AudioClip> noise;
      const auto pipe = infer_aug.pipeline(loaded.sample_rate_hz, noise);
      auto f = pipe.features(seld::read_wav(infer_wav));
      loaded.norm.apply(f);
      const auto ann = seld::predict_annotation(*loaded.model, f, infer_threshold);
      seld::save_annotation_csv(infer_out, ann);
      std::size_t active = 0;
      for (const auto& frame : ann) active += frame.empty() ? 0 : 1;
      std::cout << "frames " << ann.size() << "  active " << active << " -> " << infer_out << "\n";
    } else if (*count) {
      const auto kind = seld::parse_model_kind(count_model);
      const seld::ModelConfig cfg = count_config.empty() ? seld::ModelConfig{} : seld::load_run_config(count_config).model;
      std::cout << "params " << seld::count_params(cfg, kind) << "\nmacs " << seld::count_macs(cfg, kind, count_frames)
                << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const seld::InputError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
