// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "seld/config.hpp"
#include "seld/dataset.hpp"
#include "seld/metrics.hpp"
#include "seld/models.hpp"
#include "seld/nn/adam.hpp"
#include "seld/weights.hpp"

namespace seld {

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainOptions {
  std::size_t epochs = 500;
  std::size_t batch_size = 16;
  std::size_t patience = 50;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  WeightStore best;
};

struct Batch {
  Tensor<float> features;  // (B, C, L, F)
  Tensor<float> sed;       // (B, L, N)
  Tensor<float> doa;       // (B, L, 3N)
};

inline Batch make_batch(const std::vector<Chunk>& chunks, const std::vector<std::size_t>& idx, std::size_t from,
                        std::size_t to) {
  const auto& first = chunks[idx[from]];
  const std::size_t b = to - from;
  Shape fs = first.features.shape(), ss = first.sed.shape(), ds = first.doa.shape();
  Batch out{Tensor<float>({b, fs[0], fs[1], fs[2]}), Tensor<float>({b, ss[0], ss[1]}), Tensor<float>({b, ds[0], ds[1]})};
  for (std::size_t i = 0; i < b; ++i) {
    const auto& c = chunks[idx[from + i]];
    if (c.features.shape() != fs) throw ShapeError("chunks in a batch must share one shape");
    std::copy(c.features.vec().begin(), c.features.vec().end(), out.features.data() + i * c.features.size());
    std::copy(c.sed.vec().begin(), c.sed.vec().end(), out.sed.data() + i * c.sed.size());
    std::copy(c.doa.vec().begin(), c.doa.vec().end(), out.doa.data() + i * c.doa.size());
  }
  return out;
}

/// Mean loss over chunks in infer mode.
inline double evaluate_loss(SeldTcn<float>& model, const std::vector<Chunk>& chunks, std::size_t batch_size) {
  std::vector<std::size_t> idx(chunks.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double total = 0.0;
  for (std::size_t s = 0; s < chunks.size(); s += batch_size) {
    const std::size_t e = std::min(chunks.size(), s + batch_size);
    const Batch b = make_batch(chunks, idx, s, e);
    const auto out = model.forward(b.features, Mode::infer);
    total += seld_loss(out.sed, out.doa, b.sed, b.doa, model.config().loss_weight_doa).total * static_cast<double>(e - s);
  }
  return total / static_cast<double>(chunks.size());
}

/// Adam on shuffled mini-batches with early stopping on validation loss.
/// The model ends holding the best-validation weights.
inline TrainResult train(SeldTcn<float>& model, const std::vector<Chunk>& train_chunks,
                         const std::vector<Chunk>& val_chunks, const TrainOptions& opts) {
  if (train_chunks.empty()) throw DataError("training split has no sequences");
  if (val_chunks.empty()) throw DataError("validation split has no sequences");
  if (opts.batch_size == 0) throw ConfigError("batch_size must be positive");

  nn::AdamOptions adam_opts;
  adam_opts.lr = opts.learning_rate;
  nn::Adam<float> adam(model.parameters(), adam_opts);
  TrainResult result;
  std::size_t wait = 0;
  std::vector<std::size_t> order(train_chunks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(mix_seed(opts.seed, epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    double train_total = 0.0;
    for (std::size_t s = 0; s < order.size(); s += opts.batch_size) {
      const std::size_t e = std::min(order.size(), s + opts.batch_size);
      const Batch b = make_batch(train_chunks, order, s, e);
      model.reseed_dropout(mix_seed(opts.seed, 0xD0 + step++));
      model.zero_grad();
      const auto out = model.forward(b.features, Mode::train);
      Tensor<float> g_sed, g_doa;
      const auto loss = seld_loss(out.sed, out.doa, b.sed, b.doa, model.config().loss_weight_doa, &g_sed, &g_doa);
      model.backward(g_sed, g_doa, false);
      adam.step();
      train_total += loss.total * static_cast<double>(e - s);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = train_total / static_cast<double>(order.size());
    entry.val_loss = evaluate_loss(model, val_chunks, opts.batch_size);
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(entry);
    if (opts.on_epoch) opts.on_epoch(entry);

    if (!std::isfinite(entry.val_loss)) throw NumericError("validation loss became non-finite");
    if (entry.val_loss < result.best_val_loss) {
      result.best_val_loss = entry.val_loss;
      result.best_epoch = epoch;
      result.best = model_store(model);
      wait = 0;
    } else if (++wait >= opts.patience) {
      break;
    }
  }
  load_into(model, result.best);
  return result;
}

inline void write_train_log(std::ostream& os, const std::vector<EpochLog>& log) {
  os << "epoch,train_loss,val_loss,seconds\n";
  os.precision(9);
  for (const auto& e : log) os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.seconds << '\n';
}

// ---------------------------------------------------------------------------
// Inference and scoring

template <typename T>
FrameAnnotation predict_annotation(Model<T>& model, const Tensor<float>& normalized_features, double threshold = 0.5) {
  const auto pred = model.predict(normalized_features.template cast<T>());
  return doa_vectors_from_prediction(pred, binarize_sed(pred.sed, threshold));
}

/// Scores whole clips (no chunking) against their frame-level references.
inline EvalReport evaluate_examples(Model<float>& model, const std::vector<Example>& examples, const FeatureNorm& norm,
                                    std::size_t frames_per_segment) {
  Evaluator ev(model.config().n_sed, frames_per_segment);
  for (const auto& ex : examples) {
    Tensor<float> f = ex.features;
    norm.apply(f);
    ev.add(predict_annotation(model, f), reference_annotation(ex.targets));
  }
  return ev.report();
}

// ---------------------------------------------------------------------------
// Config-driven runs and their on-disk artifacts

struct TrainedModel {
  std::unique_ptr<SeldTcn<float>> model;
  FeatureNorm norm;
  std::uint32_t sample_rate_hz = 16000;
  TrainResult result;
};

inline std::vector<Chunk> chunk_examples(std::vector<Example>& examples, const FeatureNorm& norm, std::size_t len) {
  std::vector<Chunk> out;
  for (auto& ex : examples) {
    norm.apply(ex.features);
    for (auto& c : make_chunks(ex, len)) out.push_back(std::move(c));
  }
  return out;
}

/// Loads the train/val splits named in the config, fits feature statistics
/// on the training split and trains a SELD-TCN.
inline TrainedModel train_from_config(const RunConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (cfg.dataset_dir.empty()) throw ConfigError("config has no dataset_dir");
  FeaturePipeline pipe;
  pipe.sample_rate_hz = cfg.sample_rate_hz;
  auto train_ex = load_split(cfg.dataset_dir, "train", pipe, cfg.model.n_sed);
  auto val_ex = load_split(cfg.dataset_dir, "val", pipe, cfg.model.n_sed);
  std::vector<Tensor<float>> feats;
  for (const auto& e : train_ex) feats.push_back(e.features);
  TrainedModel out;
  out.norm = compute_norm(feats);
  out.sample_rate_hz = cfg.sample_rate_hz;
  const auto train_chunks = chunk_examples(train_ex, out.norm, cfg.model.seq_len);
  const auto val_chunks = chunk_examples(val_ex, out.norm, cfg.model.seq_len);
  out.model = std::make_unique<SeldTcn<float>>(cfg.model, cfg.seed);
  TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.batch_size = cfg.batch_size;
  opts.patience = cfg.patience;
  opts.seed = cfg.seed;
  opts.learning_rate = cfg.learning_rate;
  opts.on_epoch = on_epoch;
  out.result = train(*out.model, train_chunks, val_chunks, opts);
  return out;
}

inline std::string config_path_for(const std::string& weights_path) { return weights_path + ".cfg"; }

/// Writes the weights (parameters, running statistics, feature statistics)
/// and the model config next to them.
template <typename T>
void save_trained(const std::string& weights_path, Model<T>& model, const FeatureNorm& norm,
                  std::uint32_t sample_rate_hz) {
  WeightStore store = model_store(model);
  norm.store_into(store);
  save_weights(store, weights_path);
  std::ofstream cfg(config_path_for(weights_path));
  if (!cfg) throw IoError("cannot write '" + config_path_for(weights_path) + "'");
  cfg << "# model saved with " << weights_path << "\n"
      << format_model_config(model.config()) << "sample_rate_hz = " << sample_rate_hz << "\n";
}

struct LoadedModel {
  std::unique_ptr<Model<float>> model;
  FeatureNorm norm;
  std::uint32_t sample_rate_hz = 16000;
};

inline LoadedModel load_trained(const std::string& weights_path, ModelKind kind = ModelKind::seldtcn) {
  const WeightStore store = load_weights(weights_path);
  const RunConfig cfg = load_run_config(config_path_for(weights_path));
  LoadedModel out;
  out.model = build_model<float>(cfg.model, kind, 0);
  load_into(*out.model, store);
  out.norm = FeatureNorm::from_store(store);
  out.sample_rate_hz = cfg.sample_rate_hz;
  return out;
}

}  // namespace seld
