// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "seld/models.hpp"
#include "seld/weights.hpp"
#include "support/grad_suite.hpp"

using namespace seld;
using seld::testing::random_tensor;
using seld::testing::tiny_tcn_config;

namespace {

ModelConfig small_config(std::size_t n_sed = 3) {
  ModelConfig cfg;
  cfg.n_sed = n_sed;
  cfg.n_feature_channels = 4;
  cfg.n_bins = 32;
  cfg.conv_filters = 6;
  cfg.pool_schedule = {4, 2, 2};
  cfg.rnn_hidden = 5;
  cfg.tcn_filters = 8;
  cfg.tcn_blocks = 3;
  cfg.tcn_out_filters = 6;
  cfg.fc_units = 7;
  return cfg;
}

Tensor<float> random_features(const ModelConfig& cfg, std::size_t n, std::size_t frames, Rng& rng) {
  Tensor<float> x({n, cfg.n_feature_channels, frames, cfg.n_bins});
  for (auto& v : x.vec()) v = static_cast<float>(rng.gaussian());
  return x;
}

}  // namespace

TEST(ModelConfig, ValidationAndParsing) {
  ModelConfig bad;
  bad.n_bins = 250;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = ModelConfig{};
  bad.tcn_blocks = 17;
  EXPECT_THROW(bad.validate(), ConfigError);

  std::istringstream in(
      "# toy\n n_sed = 2\ntcn_blocks=4 # inline\npool_schedule = 8, 8, 2\n"
      "sample_rate_hz = 16000\ndataset_dir = data/x\nloss_weight_doa = 2.5\n");
  const RunConfig cfg = parse_run_config(in);
  EXPECT_EQ(cfg.model.n_sed, 2u);
  EXPECT_EQ(cfg.model.tcn_blocks, 4u);
  EXPECT_EQ(cfg.model.pool_schedule, (std::vector<std::size_t>{8, 8, 2}));
  EXPECT_EQ(cfg.dataset_dir, "data/x");
  EXPECT_DOUBLE_EQ(cfg.model.loss_weight_doa, 2.5);

  std::istringstream unknown("n_sedd = 2\n");
  EXPECT_THROW(parse_run_config(unknown), ConfigError);
  std::istringstream garbage("n_sed = two\n");
  EXPECT_THROW(parse_run_config(garbage), ConfigError);

  std::istringstream round(format_model_config(cfg.model));
  EXPECT_EQ(parse_run_config(round).model, cfg.model);
}

TEST(BuildModel, DefaultShapesForFullSizeInput) {
  ModelConfig cfg;
  cfg.n_sed = 11;
  Rng rng(1);
  auto model = build_model(cfg, ModelKind::seldtcn, 3);
  const auto x = random_features(cfg, 1, 256, rng);
  model->calibrate(x);
  const auto pred = model->predict(x.reshaped({8, 256, 256}));
  EXPECT_EQ(pred.sed.shape(), (Shape{256, 11}));
  EXPECT_EQ(pred.doa.shape(), (Shape{256, 33}));
}

TEST(BuildModel, ArchitectureLayout) {
  ModelConfig cfg;
  SeldTcn<float> tcn(cfg, 0);
  ASSERT_EQ(tcn.tcn.blocks.size(), 10u);
  for (std::size_t b = 0; b < 10; ++b) EXPECT_EQ(tcn.tcn.blocks[b].dilation(), std::size_t{1} << b);
  EXPECT_EQ(tcn.tcn.input_proj.weight.value.shape(), (Shape{256, 128, 1}));
  EXPECT_EQ(tcn.tcn.blocks[0].conv.weight.value.shape(), (Shape{256, 256, 3}));
  EXPECT_EQ(tcn.tcn.blocks[0].pointwise.weight.value.shape(), (Shape{256, 256, 1}));
  EXPECT_EQ(tcn.tcn.head1.weight.value.shape(), (Shape{128, 256, 1}));
  EXPECT_EQ(tcn.tcn.head2.weight.value.shape(), (Shape{128, 128, 1}));
  SeldNet<float> net(cfg, 0);
  EXPECT_EQ(net.gru1.hidden(), 128u);
  EXPECT_EQ(net.gru1.in_features(), 128u);
  EXPECT_EQ(net.gru2.in_features(), 256u);
}

TEST(BuildModel, SameSeedSameWeights) {
  const auto cfg = small_config();
  for (auto kind : {ModelKind::seldtcn, ModelKind::seldnet}) {
    auto a = build_model(cfg, kind, 42);
    auto b = build_model(cfg, kind, 42);
    auto c = build_model(cfg, kind, 43);
    EXPECT_EQ(parameter_store(*a), parameter_store(*b));
    EXPECT_FALSE(parameter_store(*a) == parameter_store(*c));
  }
  ModelConfig bad = small_config();
  bad.n_bins = 30;
  EXPECT_THROW(build_model(bad, ModelKind::seldtcn, 0), ConfigError);
}

TEST(Forward, TimePreservedAndOutputRanges) {
  Rng rng(2);
  for (auto kind : {ModelKind::seldtcn, ModelKind::seldnet}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto cfg = small_config(1 + seed % 4);
      auto model = build_model(cfg, kind, seed);
      const std::size_t frames = 1 + rng.below(1024);
      const auto x = random_features(cfg, 1, frames, rng);
      model->calibrate(x);
      const auto out = model->forward(x, Mode::infer);
      ASSERT_EQ(out.sed.shape(), (Shape{1, frames, cfg.n_sed}));
      ASSERT_EQ(out.doa.shape(), (Shape{1, frames, 3 * cfg.n_sed}));
      for (float v : out.sed.vec()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
      for (float v : out.doa.vec()) ASSERT_TRUE(v >= -1.0f && v <= 1.0f);
      ASSERT_EQ(model->trace().size(), cfg.pool_schedule.size() + (kind == ModelKind::seldtcn ? cfg.tcn_blocks + 2 : 2));
      for (const auto& e : model->trace()) ASSERT_EQ(e.shape[e.time_axis], frames) << e.name;
    }
  }
}

TEST(Forward, InferIsDeterministicAndBinMismatchThrows) {
  Rng rng(3);
  const auto cfg = small_config();
  auto model = build_model(cfg, ModelKind::seldtcn, 5);
  const auto x = random_features(cfg, 2, 20, rng);
  model->calibrate(x);
  const auto a = model->forward(x, Mode::infer);
  const auto b = model->forward(x, Mode::infer);
  EXPECT_EQ(a.sed, b.sed);
  EXPECT_EQ(a.doa, b.doa);
  EXPECT_THROW(model->forward(Tensor<float>({1, 4, 20, 16}), Mode::infer), ShapeError);
  EXPECT_THROW(model->predict(Tensor<float>({4, 20, 16})), ShapeError);
}

TEST(Forward, InferBeforeCalibrationThrows) {
  auto model = build_model(small_config(), ModelKind::seldtcn, 5);
  EXPECT_THROW(model->forward(Tensor<float>({1, 4, 3, 32}), Mode::infer), UninitializedError);
}

TEST(ResBlock, ZeroWeightsGiveBiasSkip) {
  ResBlock<double> block("r", 3, 2, 0.5);
  for (std::size_t c = 0; c < 3; ++c) block.pointwise.bias.value[c] = static_cast<double>(c) + 1.0;
  Tensor<double> x({1, 3, 6});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i % 5) - 2.0;
  block.bn.mark_stats_ready();
  const auto out = block.forward(x, Mode::infer);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 6; ++t) {
      EXPECT_EQ(out.skip(0, c, t), static_cast<double>(c) + 1.0);
      EXPECT_EQ(out.residual(0, c, t) - out.skip(0, c, t), x(0, c, t));
    }
}

TEST(ResBlock, ResidualMinusSkipIsInput) {
  Rng rng(4);
  ResBlock<double> block("r", 4, 1, 0.5);
  block.init(rng);
  const auto x = random_tensor({2, 4, 12}, rng);
  const auto out = block.forward(x, Mode::train);
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_NEAR(out.residual[i] - out.skip[i], x[i], 1e-14);
}

TEST(ResBlock, InferOutputIgnoresInputsBeyondDilation) {
  Rng rng(5);
  for (std::size_t d : {1, 4, 16}) {
    ResBlock<double> block("r", 3, d, 0.5);
    block.init(rng);
    const auto x = random_tensor({1, 3, 60}, rng);
    block.forward(x, Mode::train);
    const auto base = block.forward(x, Mode::infer);
    const std::size_t t = 30;
    for (std::size_t s = 0; s < 60; ++s) {
      auto xp = x;
      for (std::size_t c = 0; c < 3; ++c) xp(0, c, s) += 0.7;
      const auto out = block.forward(xp, Mode::infer);
      const bool near = (s > t ? s - t : t - s) <= d;
      if (!near) {
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.skip(0, c, t), base.skip(0, c, t)) << "d=" << d;
      }
      if (s == t + d) {
        EXPECT_NE(out.skip(0, 0, t), base.skip(0, 0, t));
      }
    }
  }
}

TEST(Tcn, ReceptiveFieldIs2047Frames) {
  ModelConfig cfg;
  EXPECT_EQ(tcn_receptive_field(cfg), 2047u);
  cfg.tcn_blocks = 4;
  EXPECT_EQ(tcn_receptive_field(cfg), 31u);
}

TEST(Tcn, NonCausalAndBoundedDependence) {
  // Reduced width keeps the probe fast; the dilation schedule is the default one.
  ModelConfig cfg;
  cfg.tcn_filters = 8;
  cfg.tcn_out_filters = 4;
  TcnStack<double> tcn(cfg, 6);
  Rng rng(6);
  tcn.init(rng);
  const std::size_t frames = 2200, t = 1100;
  const auto x = random_tensor({1, 6, frames}, rng);
  tcn.forward(x, Mode::train);
  const auto base = tcn.forward(x, Mode::infer);
  auto probe = [&](std::size_t s) {
    auto xp = x;
    for (std::size_t c = 0; c < 6; ++c) xp(0, c, s) += 1.0;
    const auto out = tcn.forward(xp, Mode::infer);
    bool changed = false;
    for (std::size_t c = 0; c < 4; ++c) changed |= out(0, c, t) != base(0, c, t);
    return changed;
  };
  EXPECT_TRUE(probe(t + 1));
  EXPECT_TRUE(probe(t - 1));
  EXPECT_TRUE(probe(t + 1023));
  EXPECT_TRUE(probe(t - 1023));
  EXPECT_FALSE(probe(t + 1024));
  EXPECT_FALSE(probe(t - 1024));
  EXPECT_FALSE(probe(frames - 1));
  EXPECT_FALSE(probe(0));
}

TEST(Loss, PerfectPredictionReachesFloor) {
  Tensor<float> sed({4, 2}, {1, 0, 0, 1, 1, 1, 0, 0});
  Tensor<float> doa({4, 6});
  for (std::size_t i = 0; i < doa.size(); ++i) doa[i] = (i % 3 == 0) ? 1.0f : 0.0f;
  const auto l = seld_loss(sed, doa, sed, doa, 1.0);
  EXPECT_LT(l.total, 1e-5);
}

TEST(Loss, HalfProbabilityGivesLn2AndWeightIsLinear) {
  Rng rng(7);
  Tensor<double> sed({5, 3}, 0.5);
  Tensor<double> target({5, 3});
  for (auto& v : target.vec()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  const auto doa = random_tensor({5, 9}, rng, 0.3);
  const auto tdoa = random_tensor({5, 9}, rng, 0.3);
  const auto l1 = seld_loss(sed, doa, target, tdoa, 1.0);
  EXPECT_NEAR(l1.bce, std::log(2.0), 1e-12);
  const auto l2 = seld_loss(sed, doa, target, tdoa, 2.0);
  EXPECT_NEAR(l2.total - l2.bce, 2.0 * (l1.total - l1.bce), 1e-12);
  EXPECT_THROW(seld_loss(sed, doa, Tensor<double>({5, 2}), tdoa, 1.0), ShapeError);
}

TEST(GradientCheck, ResBlockAndFullLossOverTwentySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_LT(seld::testing::resblock_grad_error(seed), 1e-3) << "resblock seed " << seed;
    EXPECT_LT(seld::testing::seldtcn_loss_grad_error(seed), 1e-3) << "model seed " << seed;
  }
}

TEST(GradientFlow, EveryParameterReceivesGradient) {
  const auto cfg = small_config(2);
  SeldTcn<float> model(cfg, 9);
  Rng rng(9);
  std::vector<bool> touched(model.parameters().size(), false);
  for (int batch = 0; batch < 10; ++batch) {
    const auto x = random_features(cfg, 2, 24, rng);
    model.zero_grad();
    const auto out = model.forward(x, Mode::train);
    Tensor<float> ts(out.sed.shape()), td(out.doa.shape());
    for (auto& v : ts.vec()) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
    for (auto& v : td.vec()) v = static_cast<float>(rng.uniform(-1, 1));
    Tensor<float> gs, gd;
    seld_loss(out.sed, out.doa, ts, td, 1.0, &gs, &gd);
    model.backward(gs, gd);
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      for (float g : params[i]->grad.vec()) touched[i] = touched[i] || g != 0.0f;
  }
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_TRUE(touched[i]) << params[i]->name;
}

TEST(Complexity, SingleLayerHandCounts) {
  EXPECT_EQ(count::dense_params(128, 11), 1419u);
  EXPECT_EQ(count::dense_macs(128, 11, 1), 1408u);
  EXPECT_EQ(count::conv2d_params(8, 64), 8u * 64 * 9 + 64);
  EXPECT_EQ(count::conv1d_params(256, 256, 3), 196864u);
  EXPECT_EQ(count::bigru_params(128, 128), 2u * (3 * 128 * 256 + 384));
  EXPECT_EQ(count::batchnorm_params(64), 128u);
}

TEST(Complexity, MatchesBuiltModels) {
  for (auto cfg : {ModelConfig{}, small_config(), tiny_tcn_config()}) {
    for (auto kind : {ModelKind::seldtcn, ModelKind::seldnet}) {
      auto model = build_model(cfg, kind, 0);
      EXPECT_EQ(count_params(cfg, kind), parameter_store(*model).element_count());
    }
  }
}

TEST(Complexity, SeldnetNearReportedSize) {
  ModelConfig cfg;
  cfg.n_sed = 11;
  const double params = static_cast<double>(count_params(cfg, ModelKind::seldnet));
  EXPECT_GT(params, 0.51e6 * 0.7);
  EXPECT_LT(params, 0.51e6 * 1.3);
}

TEST(Weights, RoundTripIsBitExact) {
  auto model = build_model(small_config(), ModelKind::seldtcn, 1);
  WeightStore store = model_store(*model);
  store.add("extra.f64", Tensor<double>({2, 3}, {1e-300, -0.0, 3.5, 1e300, 7, -2}));
  std::stringstream buf;
  write_weights(buf, store);
  const WeightStore back = read_weights(buf);
  EXPECT_EQ(back, store);
  EXPECT_EQ(dtype_of(*back.find("extra.f64")), DType::float64);
}

TEST(Weights, EmptyStoreAndBinaryLayout) {
  std::stringstream buf;
  write_weights(buf, WeightStore{});
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes, std::string("SELDW1\0\0\0\0\0", 11));
  EXPECT_TRUE(read_weights(buf).empty());

  WeightStore one;
  one.add("w", Tensor<float>({2}, {1.0f, -2.0f}));
  std::stringstream b2;
  write_weights(b2, one);
  const std::string s = b2.str();
  // magic, count=1, name len=1, 'w', dtype 0, rank 1, dim 2, two floats
  ASSERT_EQ(s.size(), 7u + 4 + 2 + 1 + 1 + 1 + 4 + 8);
  EXPECT_EQ(s[7], '\x01');
  EXPECT_EQ(s[11], '\x01');
  EXPECT_EQ(s[13], 'w');
  EXPECT_EQ(s[14], '\0');
  EXPECT_EQ(s[15], '\x01');
  EXPECT_EQ(s[16], '\x02');
  EXPECT_EQ(static_cast<unsigned char>(s[23]), 0x3Fu);  // 1.0f = 0x3F800000 LE
}

TEST(Weights, CorruptionIsDetected) {
  WeightStore store;
  store.add("w", Tensor<float>({3}, 1.0f));
  std::stringstream buf;
  write_weights(buf, store);
  std::string bytes = buf.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream s1(bad_magic);
  EXPECT_THROW(read_weights(s1), FormatError);

  std::stringstream s2(bytes.substr(0, bytes.size() - 2));
  EXPECT_THROW(read_weights(s2), FormatError);

  EXPECT_THROW(store.add("w", Tensor<float>({1})), FormatError);
}

TEST(Weights, LoadIntoRestoresInference) {
  Rng rng(10);
  const auto cfg = small_config();
  auto a = build_model(cfg, ModelKind::seldtcn, 1);
  const auto x = random_features(cfg, 1, 30, rng);
  a->calibrate(x);
  const auto want = a->forward(x, Mode::infer);
  std::stringstream buf;
  write_weights(buf, model_store(*a));
  auto b = build_model(cfg, ModelKind::seldtcn, 99);
  load_into(*b, read_weights(buf));
  const auto got = b->forward(x, Mode::infer);
  EXPECT_EQ(got.sed, want.sed);
  EXPECT_EQ(got.doa, want.doa);

  auto other = build_model(small_config(5), ModelKind::seldtcn, 1);
  EXPECT_THROW(load_into(*other, model_store(*a)), FormatError);
}
