// tests/model_test.cc

// Copyright 2026  The respr Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "respr/model.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "respr/common.h"
#include "respr/losses.h"
#include "testutil.h"

namespace respr {
namespace {

using respr_test::CheckGradients;
using respr_test::TempDir;

ModelConfig SmallConfig() {
  ModelConfig c;
  c.n_mels = 8;
  c.n_lstm = 4;
  c.time_conv = true;
  c.conv_kernel = 3;
  return c;
}

// ---- configuration -----------------------------------------------------------

TEST(ModelConfig, DefaultsValidate) {
  ModelConfig c;
  EXPECT_NO_THROW(c.Validate());
  EXPECT_EQ(c.breath_embed_dim(), c.n_lstm);
  EXPECT_EQ(c.noise_embed_dim(), c.n_lstm / 4);
}

TEST(ModelConfig, RejectsBadFields) {
  ModelConfig c;
  c.n_mels = 0;
  EXPECT_THROW(c.Validate(), ParameterError);
  c = ModelConfig();
  c.n_lstm = 0;
  EXPECT_THROW(c.Validate(), ParameterError);
  c = ModelConfig();
  c.conv_kernel = 2;  // must be odd
  EXPECT_THROW(c.Validate(), ParameterError);
  c = ModelConfig();
  c.conv_kernel = -3;
  EXPECT_THROW(c.Validate(), ParameterError);
  c = ModelConfig();
  c.n_breath_classes = 1;
  EXPECT_THROW(c.Validate(), ParameterError);
  c = ModelConfig();
  c.n_noise_classes = 1;
  EXPECT_THROW(c.Validate(), ParameterError);
}

TEST(ModelConfig, NoiseEmbedDimFloorsAtOne) {
  ModelConfig c;
  c.n_lstm = 3;
  EXPECT_EQ(c.noise_embed_dim(), 1);
  c.n_lstm = 32;
  EXPECT_EQ(c.noise_embed_dim(), 8);
}

// ---- initialization ----------------------------------------------------------

TEST(ModelInit, NamesAndShapesWithTimeConv) {
  const auto cfg = SmallConfig();
  const auto p = InitModelParams<float>(cfg, 11);
  const int D = cfg.n_mels, H = cfg.n_lstm, K = cfg.conv_kernel;
  const int Eb = cfg.breath_embed_dim(), En = cfg.noise_embed_dim();

  const std::vector<std::string> want_names = {
      "conv_w",       "conv_b",       "lstm_wx",      "lstm_wh",
      "lstm_b",       "emb_breath_w", "emb_breath_b", "emb_noise_w",
      "emb_noise_b",  "head_reg_w",   "head_reg_b",   "head_breath_w",
      "head_breath_b", "head_noise_w", "head_noise_b"};
  ASSERT_EQ(p.names, want_names);

  EXPECT_EQ(p.Get("conv_w").shape(), Shape::Cube(K, D, D));
  EXPECT_EQ(p.Get("conv_b").shape(), Shape::Vec(D));
  EXPECT_EQ(p.Get("lstm_wx").shape(), Shape::Mat(D, 4 * H));
  EXPECT_EQ(p.Get("lstm_wh").shape(), Shape::Mat(H, 4 * H));
  EXPECT_EQ(p.Get("lstm_b").shape(), Shape::Vec(4 * H));
  EXPECT_EQ(p.Get("emb_breath_w").shape(), Shape::Mat(H, Eb));
  EXPECT_EQ(p.Get("emb_noise_w").shape(), Shape::Mat(H, En));
  EXPECT_EQ(p.Get("head_reg_w").shape(), Shape::Mat(Eb, 2));
  EXPECT_EQ(p.Get("head_breath_w").shape(),
            Shape::Mat(Eb, cfg.n_breath_classes));
  EXPECT_EQ(p.Get("head_noise_w").shape(),
            Shape::Mat(En, cfg.n_noise_classes));

  int64_t want = 0;
  for (const auto& t : p.tensors) want += t.shape().numel();
  EXPECT_EQ(p.ParameterCount(), want);
  EXPECT_THROW(p.Get("no_such_parameter"), ParameterError);
}

TEST(ModelInit, PlainLstmHasNoConvParameters) {
  auto cfg = SmallConfig();
  cfg.time_conv = false;
  const auto p = InitModelParams<float>(cfg, 11);
  EXPECT_EQ(std::count(p.names.begin(), p.names.end(), "conv_w"), 0);
  EXPECT_EQ(std::count(p.names.begin(), p.names.end(), "conv_b"), 0);
  EXPECT_EQ(p.names.front(), "lstm_wx");
}

TEST(ModelInit, RecurrentGateBlocksAreOrthogonal) {
  auto cfg = SmallConfig();
  cfg.n_lstm = 6;
  const auto p = InitModelParams<double>(cfg, 3);
  const int H = cfg.n_lstm;
  const auto& wh = p.Get("lstm_wh").val();  // (H, 4H) row-major
  for (int gate = 0; gate < 4; ++gate) {
    for (int r1 = 0; r1 < H; ++r1) {
      for (int r2 = 0; r2 < H; ++r2) {
        double dot = 0.0;
        for (int c = 0; c < H; ++c)
          dot += wh[r1 * 4 * H + gate * H + c] * wh[r2 * 4 * H + gate * H + c];
        EXPECT_NEAR(dot, r1 == r2 ? 1.0 : 0.0, 1e-10)
            << "gate " << gate << " rows " << r1 << "," << r2;
      }
    }
  }
}

TEST(ModelInit, ForgetGateBiasStartsAtOne) {
  const auto cfg = SmallConfig();
  const auto p = InitModelParams<float>(cfg, 5);
  const int H = cfg.n_lstm;
  const auto& b = p.Get("lstm_b").val();
  ASSERT_EQ(static_cast<int>(b.size()), 4 * H);
  for (int i = 0; i < 4 * H; ++i) {
    if (i >= H && i < 2 * H)
      EXPECT_EQ(b[i], 1.0f) << "forget bias index " << i;
    else
      EXPECT_EQ(b[i], 0.0f) << "bias index " << i;
  }
}

TEST(ModelInit, InputWeightsRespectFanInBound) {
  const auto cfg = SmallConfig();
  const auto p = InitModelParams<float>(cfg, 19);
  const int D = cfg.n_mels, K = cfg.conv_kernel;

  const double conv_bound = std::sqrt(1.0 / (K * D));
  double conv_absmax = 0.0;
  for (float v : p.Get("conv_w").val())
    conv_absmax = std::max(conv_absmax, std::abs(static_cast<double>(v)));
  EXPECT_LE(conv_absmax, conv_bound);
  EXPECT_GT(conv_absmax, 0.0);

  const double wx_bound = std::sqrt(1.0 / D);
  double wx_absmax = 0.0;
  for (float v : p.Get("lstm_wx").val())
    wx_absmax = std::max(wx_absmax, std::abs(static_cast<double>(v)));
  EXPECT_LE(wx_absmax, wx_bound);
  EXPECT_GT(wx_absmax, 0.5 * wx_bound);  // draws should fill the range

  for (float v : p.Get("conv_b").val()) EXPECT_EQ(v, 0.0f);
  for (float v : p.Get("head_reg_b").val()) EXPECT_EQ(v, 0.0f);
}

TEST(ModelInit, DeterministicPerSeedAndSeedSensitive) {
  const auto cfg = SmallConfig();
  const auto a = InitModelParams<float>(cfg, 42);
  const auto b = InitModelParams<float>(cfg, 42);
  const auto c = InitModelParams<float>(cfg, 43);
  ASSERT_EQ(a.names, b.names);
  bool any_diff_c = false;
  for (size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(a.tensors[i].val(), b.tensors[i].val()) << a.names[i];
    if (a.tensors[i].val() != c.tensors[i].val()) any_diff_c = true;
  }
  EXPECT_TRUE(any_diff_c);
}

// ---- forward pass ------------------------------------------------------------

TEST(ModelForwardPass, OutputShapes) {
  const auto cfg = SmallConfig();
  const auto p = InitModelParams<float>(cfg, 1);
  const int64_t B = 3, T = 7, D = cfg.n_mels;

  Tape tape;
  std::vector<float> xs(B * T * D);
  for (size_t i = 0; i < xs.size(); ++i)
    xs[i] = 0.1f * static_cast<float>(i % 13) - 0.6f;
  auto x = Tape::Constant(Shape::Cube(B, T, D), std::move(xs));
  auto mask = Tape::Constant(Shape::Mat(B, T), std::vector<float>(B * T, 1.0f));

  const auto out = ModelForward(&tape, p, x, mask);
  EXPECT_EQ(out.rr.shape(), Shape::Mat(B, 1));
  EXPECT_EQ(out.rc.shape(), Shape::Mat(B, 1));
  EXPECT_EQ(out.breath_logits.shape(), Shape::Mat(B, cfg.n_breath_classes));
  EXPECT_EQ(out.noise_logits.shape(), Shape::Mat(B, cfg.n_noise_classes));
  for (float v : out.rr.val()) EXPECT_TRUE(std::isfinite(v));
  for (float v : out.breath_logits.val()) EXPECT_TRUE(std::isfinite(v));
}

TEST(ModelForwardPass, PlainLstmRuns) {
  auto cfg = SmallConfig();
  cfg.time_conv = false;
  const auto p = InitModelParams<float>(cfg, 1);
  Tape tape;
  auto x = Tape::Constant(Shape::Cube(2, 5, cfg.n_mels),
                          std::vector<float>(2 * 5 * cfg.n_mels, 0.25f));
  auto mask = Tape::Constant(Shape::Mat(2, 5), std::vector<float>(10, 1.0f));
  const auto out = ModelForward(&tape, p, x, mask);
  EXPECT_EQ(out.rr.shape(), Shape::Mat(2, 1));
}

// A padded sequence must produce exactly the state reached at its true final
// frame: compare against running the unpadded sequence alone.
TEST(ModelForwardPass, MaskFreezesRecurrentState) {
  const auto cfg = SmallConfig();
  const auto p = InitModelParams<float>(cfg, 77);
  const int64_t D = cfg.n_mels, T_full = 7, T_short = 4;

  std::vector<float> full(T_full * D), shortened(T_short * D);
  for (size_t i = 0; i < full.size(); ++i)
    full[i] = std::sin(0.37 * static_cast<double>(i)) * 0.8;
  std::copy(full.begin(), full.begin() + shortened.size(), shortened.begin());

  // Batch of two: row 0 runs all 7 frames, row 1 stops after 4; its padding
  // carries large junk values that must not leak through the mask.
  std::vector<float> xb(2 * T_full * D);
  std::copy(full.begin(), full.end(), xb.begin());
  std::copy(full.begin(), full.end(), xb.begin() + T_full * D);
  for (int64_t t = T_short; t < T_full; ++t)
    for (int64_t d = 0; d < D; ++d) xb[(T_full + t) * D + d] = 9.0f;
  std::vector<float> mb(2 * T_full, 1.0f);
  for (int64_t t = T_short; t < T_full; ++t) mb[T_full + t] = 0.0f;

  Tape tape;
  auto out_batch =
      ModelForward(&tape, p, Tape::Constant(Shape::Cube(2, T_full, D), xb),
                   Tape::Constant(Shape::Mat(2, T_full), mb));

  Tape tape_solo;
  auto out_solo = ModelForward(
      &tape_solo, p,
      Tape::Constant(Shape::Cube(1, T_short, D), shortened),
      Tape::Constant(Shape::Mat(1, T_short),
                     std::vector<float>(T_short, 1.0f)));

  EXPECT_FLOAT_EQ(out_batch.rr.val()[1], out_solo.rr.val()[0]);
  EXPECT_FLOAT_EQ(out_batch.rc.val()[1], out_solo.rc.val()[0]);
  for (int k = 0; k < cfg.n_breath_classes; ++k)
    EXPECT_FLOAT_EQ(out_batch.breath_logits.val()[cfg.n_breath_classes + k],
                    out_solo.breath_logits.val()[k]);
  for (int k = 0; k < cfg.n_noise_classes; ++k)
    EXPECT_FLOAT_EQ(out_batch.noise_logits.val()[cfg.n_noise_classes + k],
                    out_solo.noise_logits.val()[k]);

  // Row 0 saw three extra frames, so it must differ from the short run.
  EXPECT_NE(out_batch.rr.val()[0], out_solo.rr.val()[0]);
}

TEST(ModelForwardPass, RejectsMismatchedShapes) {
  const auto cfg = SmallConfig();
  const auto p = InitModelParams<float>(cfg, 1);
  Tape tape;
  auto mask = Tape::Constant(Shape::Mat(1, 4), std::vector<float>(4, 1.0f));

  auto wrong_mels = Tape::Constant(Shape::Cube(1, 4, cfg.n_mels + 1),
                                   std::vector<float>(4 * (cfg.n_mels + 1)));
  EXPECT_THROW(ModelForward(&tape, p, wrong_mels, mask), ShapeError);

  auto x = Tape::Constant(Shape::Cube(1, 4, cfg.n_mels),
                          std::vector<float>(4 * cfg.n_mels));
  auto bad_mask = Tape::Constant(Shape::Mat(1, 3), std::vector<float>(3, 1.0f));
  EXPECT_THROW(ModelForward(&tape, p, x, bad_mask), ShapeError);

  auto rank2 = Tape::Constant(Shape::Mat(4, cfg.n_mels),
                              std::vector<float>(4 * cfg.n_mels));
  EXPECT_THROW(ModelForward(&tape, p, rank2, mask), ShapeError);
}

// ---- end-to-end gradient check ------------------------------------------------

// All parameters plus the input feed the four-task training loss; analytic
// gradients for every element must match central finite differences.
TEST(ModelGradients, FullNetworkThroughTrainingLoss) {
  ModelConfig cfg;
  cfg.n_mels = 3;
  cfg.n_lstm = 3;
  cfg.time_conv = true;
  cfg.conv_kernel = 3;
  const int D = cfg.n_mels, H = cfg.n_lstm, K = cfg.conv_kernel;
  const int Eb = cfg.breath_embed_dim(), En = cfg.noise_embed_dim();
  const int64_t B = 2, T = 3;

  const std::vector<Shape> shapes = {
      Shape::Cube(K, D, D),                    // conv_w
      Shape::Vec(D),                           // conv_b
      Shape::Mat(D, 4 * H),                    // lstm_wx
      Shape::Mat(H, 4 * H),                    // lstm_wh
      Shape::Vec(4 * H),                       // lstm_b
      Shape::Mat(H, Eb),                       // emb_breath_w
      Shape::Vec(Eb),                          // emb_breath_b
      Shape::Mat(H, En),                       // emb_noise_w
      Shape::Vec(En),                          // emb_noise_b
      Shape::Mat(Eb, 2),                       // head_reg_w
      Shape::Vec(2),                           // head_reg_b
      Shape::Mat(Eb, cfg.n_breath_classes),    // head_breath_w
      Shape::Vec(cfg.n_breath_classes),        // head_breath_b
      Shape::Mat(En, cfg.n_noise_classes),     // head_noise_w
      Shape::Vec(cfg.n_noise_classes),         // head_noise_b
      Shape::Cube(B, T, D),                    // input features
  };
  const std::vector<std::string> names = {
      "conv_w",       "conv_b",       "lstm_wx",      "lstm_wh",
      "lstm_b",       "emb_breath_w", "emb_breath_b", "emb_noise_w",
      "emb_noise_b",  "head_reg_w",   "head_reg_b",   "head_breath_w",
      "head_breath_b", "head_noise_w", "head_noise_b"};

  BatchTargets targets;
  targets.rr_norm = {0.4, 0.9};
  targets.rc_norm = {0.3, 0.7};
  targets.breath_class = {1, 2};
  targets.noise_class = {0, 1};
  MtlWeights weights;
  DwaState dwa;

  auto build = [&](TapeD& tape,
                   const std::vector<TensorD>& leaves) -> TensorD {
    ModelParamsT<double> params;
    params.config = cfg;
    params.names = names;
    params.tensors.assign(leaves.begin(), leaves.end() - 1);
    // Row 1 pads its last frame so the freeze path is inside the check.
    auto mask = TapeD::Constant(Shape::Mat(B, T),
                                std::vector<double>{1, 1, 1, 1, 1, 0});
    auto out = ModelForward(&tape, params, leaves.back(), mask);
    return MtlLossGraph(&tape, out, targets, weights, dwa).total;
  };

  double worst = 0.0;
  for (uint64_t seed : {101u, 202u, 303u}) {
    const auto r = CheckGradients(build, shapes, seed, 1e-5, 0.4);
    worst = std::max(worst, r.max_err);
  }
  EXPECT_LT(worst, 1e-3);
}

// ---- checkpointing -----------------------------------------------------------

ModelBundle MakeBundle(uint64_t seed) {
  ModelBundle b;
  b.params = InitModelParams<float>(SmallConfig(), seed);
  const int D = b.params.config.n_mels;
  b.norm.mean.resize(D);
  b.norm.std.resize(D);
  for (int i = 0; i < D; ++i) {
    b.norm.mean[i] = -4.0f + 0.25f * i;
    b.norm.std[i] = 1.0f + 0.125f * i;
  }
  b.metadata = {{"run_id", "unit"}, {"best_epoch", "7"}};
  return b;
}

std::string SlurpFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in.good()) << path;
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

TEST(ModelCheckpoint, RoundTripIsExact) {
  TempDir dir("model_ckpt");
  const auto bundle = MakeBundle(9001);
  const std::string path = dir.file("m.ckpt");
  SaveModel(path, bundle);
  const auto loaded = LoadModel(path);

  EXPECT_EQ(loaded.params.config.n_mels, bundle.params.config.n_mels);
  EXPECT_EQ(loaded.params.config.n_lstm, bundle.params.config.n_lstm);
  EXPECT_EQ(loaded.params.config.time_conv, bundle.params.config.time_conv);
  EXPECT_EQ(loaded.params.config.conv_kernel, bundle.params.config.conv_kernel);
  ASSERT_EQ(loaded.params.names, bundle.params.names);
  for (size_t i = 0; i < bundle.params.tensors.size(); ++i) {
    EXPECT_EQ(loaded.params.tensors[i].shape(),
              bundle.params.tensors[i].shape());
    EXPECT_EQ(loaded.params.tensors[i].val(), bundle.params.tensors[i].val())
        << bundle.params.names[i];
  }
  EXPECT_EQ(loaded.norm.mean, bundle.norm.mean);
  EXPECT_EQ(loaded.norm.std, bundle.norm.std);
  EXPECT_EQ(loaded.metadata, bundle.metadata);

  // Re-saving the loaded bundle reproduces the file byte for byte.
  const std::string path2 = dir.file("m2.ckpt");
  SaveModel(path2, loaded);
  EXPECT_EQ(SlurpFile(path), SlurpFile(path2));
}

TEST(ModelCheckpoint, MissingFileThrows) {
  EXPECT_THROW(LoadModel("/nonexistent/dir/model.ckpt"), FormatError);
}

TEST(ModelCheckpoint, BadMagicThrows) {
  TempDir dir("model_ckpt_magic");
  const std::string path = dir.file("bad.ckpt");
  std::ofstream(path, std::ios::binary) << "NOTAMODELFILE___";
  EXPECT_THROW(LoadModel(path), FormatError);
}

TEST(ModelCheckpoint, UnsupportedVersionThrows) {
  TempDir dir("model_ckpt_ver");
  const std::string path = dir.file("m.ckpt");
  SaveModel(path, MakeBundle(5));
  std::string bytes = SlurpFile(path);
  bytes[4] = 99;  // little-endian version word
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
  EXPECT_THROW(LoadModel(path), UnsupportedError);
}

TEST(ModelCheckpoint, TruncationThrows) {
  TempDir dir("model_ckpt_trunc");
  const std::string path = dir.file("m.ckpt");
  SaveModel(path, MakeBundle(5));
  std::string bytes = SlurpFile(path);
  bytes.resize(bytes.size() - 5);
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
  EXPECT_THROW(LoadModel(path), CorruptionError);
}

TEST(ModelCheckpoint, TrailingGarbageThrows) {
  TempDir dir("model_ckpt_trail");
  const std::string path = dir.file("m.ckpt");
  SaveModel(path, MakeBundle(5));
  std::ofstream(path, std::ios::binary | std::ios::app) << "extra";
  EXPECT_THROW(LoadModel(path), CorruptionError);
}

TEST(ModelCheckpoint, UnparseableHeaderThrows) {
  TempDir dir("model_ckpt_hdr");
  const std::string path = dir.file("m.ckpt");
  std::string bytes;
  bytes.append("BRRM", 4);
  const uint32_t version = 1, len = 7;
  bytes.append(reinterpret_cast<const char*>(&version), 4);
  bytes.append(reinterpret_cast<const char*>(&len), 4);
  bytes.append("notjson", 7);
  std::ofstream(path, std::ios::binary) << bytes;
  EXPECT_THROW(LoadModel(path), FormatError);
}

// ---- inference ---------------------------------------------------------------

FeatureMatrix MakeFeatures(int rows, int n_mels, double scale = 1.0) {
  FeatureMatrix f;
  f.rows = rows;
  f.n_mels = n_mels;
  f.frames.resize(static_cast<size_t>(rows) * n_mels);
  for (int t = 0; t < rows; ++t)
    for (int m = 0; m < n_mels; ++m)
      f.frames[t * n_mels + m] =
          scale * (std::sin(0.21 * t + 0.5 * m) - 2.0);
  return f;
}

TEST(ModelPredict, ProbabilitiesAndClassNames) {
  const auto bundle = MakeBundle(31);
  const auto f = MakeFeatures(20, bundle.params.config.n_mels);
  const auto pred = Predict(bundle, f);

  EXPECT_TRUE(std::isfinite(pred.rr_bpm));
  EXPECT_TRUE(std::isfinite(pred.rc));
  ASSERT_EQ(pred.breath_probs.size(), 3u);
  ASSERT_EQ(pred.noise_probs.size(), 2u);
  const double bsum = std::accumulate(pred.breath_probs.begin(),
                                      pred.breath_probs.end(), 0.0);
  const double nsum =
      std::accumulate(pred.noise_probs.begin(), pred.noise_probs.end(), 0.0);
  EXPECT_NEAR(bsum, 1.0, 1e-5);
  EXPECT_NEAR(nsum, 1.0, 1e-5);

  static const char* kBreathNames[] = {"no_breathing", "normal", "heavy"};
  const int bi = static_cast<int>(
      std::max_element(pred.breath_probs.begin(), pred.breath_probs.end()) -
      pred.breath_probs.begin());
  EXPECT_EQ(pred.breath_class, kBreathNames[bi]);
  EXPECT_TRUE(pred.noise_label == "noiseless" || pred.noise_label == "noisy");
}

// Doubling the features and the stored deviations must cancel exactly, since
// scaling by a power of two is lossless.
TEST(ModelPredict, NormalizationScaleInvariance) {
  auto bundle = MakeBundle(31);
  std::fill(bundle.norm.mean.begin(), bundle.norm.mean.end(), 0.0f);
  std::fill(bundle.norm.std.begin(), bundle.norm.std.end(), 1.0f);
  const auto f1 = MakeFeatures(16, bundle.params.config.n_mels, 1.0);
  const auto p1 = Predict(bundle, f1);

  std::fill(bundle.norm.std.begin(), bundle.norm.std.end(), 2.0f);
  const auto f2 = MakeFeatures(16, bundle.params.config.n_mels, 2.0);
  const auto p2 = Predict(bundle, f2);

  EXPECT_EQ(p1.rr_bpm, p2.rr_bpm);
  EXPECT_EQ(p1.rc, p2.rc);
  EXPECT_EQ(p1.breath_probs, p2.breath_probs);
}

TEST(ModelPredict, DenormalizesRegressionHeads) {
  const auto bundle = MakeBundle(31);
  const auto f = MakeFeatures(20, bundle.params.config.n_mels);
  const auto pred = Predict(bundle, f);

  Tape tape;
  tape.SetGradEnabled(false);
  const int D = bundle.params.config.n_mels;
  std::vector<float> x(f.frames.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const int m = static_cast<int>(i % D);
    x[i] = (static_cast<float>(f.frames[i]) - bundle.norm.mean[m]) /
           std::max(bundle.norm.std[m], 1e-6f);
  }
  auto out = ModelForward(
      &tape, bundle.params, Tape::Constant(Shape::Cube(1, f.rows, D), x),
      Tape::Constant(Shape::Mat(1, f.rows),
                     std::vector<float>(f.rows, 1.0f)));
  EXPECT_NEAR(pred.rr_bpm, out.rr.val()[0] * 60.0, 1e-6);
  EXPECT_NEAR(pred.rc, out.rc.val()[0] * 7.0, 1e-6);
}

TEST(ModelPredict, RejectsBadInputs) {
  auto bundle = MakeBundle(31);
  EXPECT_THROW(
      Predict(bundle, MakeFeatures(10, bundle.params.config.n_mels + 1)),
      ShapeError);
  EXPECT_THROW(Predict(bundle, MakeFeatures(0, bundle.params.config.n_mels)),
               DegenerateInputError);
  bundle.norm.mean.pop_back();
  EXPECT_THROW(Predict(bundle, MakeFeatures(10, bundle.params.config.n_mels)),
               FormatError);
}

}  // namespace
}  // namespace respr
