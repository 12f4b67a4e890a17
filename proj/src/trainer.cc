// src/trainer.cc

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

#include "respr/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "respr/common.h"
#include "respr/rng.h"

namespace respr {

namespace {

std::string FormatG(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void FisherYates(std::vector<int>* v, Rng* rng) {
  for (size_t i = v->size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(
        rng->UniformInt(0, static_cast<int64_t>(i) - 1));
    std::swap((*v)[i - 1], (*v)[j]);
  }
}

template <typename T>
void ShuffleInPlace(std::vector<T>* v, Rng* rng) {
  for (size_t i = v->size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(
        rng->UniformInt(0, static_cast<int64_t>(i) - 1));
    std::swap((*v)[i - 1], (*v)[j]);
  }
}

ModelParams CloneParams(const ModelParams& p) {
  ModelParams out;
  out.config = p.config;
  out.names = p.names;
  for (const auto& t : p.tensors)
    out.tensors.push_back(Tape::Leaf(t.shape(), t.val(), true));
  return out;
}

}  // namespace

void TrainConfig::Validate() const {
  if (batch_size < 2)
    throw ParameterError("batch_size must be >= 2 (CCC needs a batch)");
  if (patience < 1) throw ParameterError("patience must be >= 1");
  if (max_epochs < 1) throw ParameterError("max_epochs must be >= 1");
  if (learning_rate <= 0.0) throw ParameterError("learning_rate must be > 0");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0)
    throw ParameterError("adam betas must lie in [0, 1)");
  if (adam_eps <= 0.0) throw ParameterError("adam_eps must be > 0");
  if (grad_clip_norm < 0.0)
    throw ParameterError("grad_clip_norm must be >= 0 (0 disables clipping)");
}

Dataset BuildDataset(const std::vector<SegmentLabel>& manifest,
                     const FeatureLoadFn& load_features) {
  if (manifest.empty()) throw ParameterError("empty manifest");
  if (!load_features) throw ParameterError("feature loader is required");

  Dataset ds;
  for (const auto& row : manifest) {
    const FeatureMatrix f = load_features(row);
    if (f.rows < 1)
      throw DegenerateInputError("segment '" + row.id + "' has no frames");
    if (ds.n_mels == 0) ds.n_mels = f.n_mels;
    if (f.n_mels != ds.n_mels)
      throw ShapeError("segment '" + row.id + "' has " +
                       std::to_string(f.n_mels) + " mel channels, expected " +
                       std::to_string(ds.n_mels));
    TrainSample s;
    s.id = row.id;
    s.rows = f.rows;
    s.features.resize(f.frames.size());
    for (size_t i = 0; i < f.frames.size(); ++i)
      s.features[i] = static_cast<float>(f.frames[i]);
    s.rr_bpm = row.rr_bpm;
    s.rc = row.rc;
    s.breath_class = BreathClassIndex(row.breath_class);
    s.noise_class = NoiseClassIndex(row.noise_label);
    s.gender = row.gender;
    if (row.split == "train")
      ds.train.push_back(std::move(s));
    else if (row.split == "validation")
      ds.validation.push_back(std::move(s));
    else if (row.split == "evaluation")
      ds.evaluation.push_back(std::move(s));
    else
      throw FormatError("segment '" + row.id + "' has unknown split '" +
                        row.split + "'");
  }

  // Per-dimension statistics over all training frames.
  ds.norm.mean.assign(ds.n_mels, 0.0f);
  ds.norm.std.assign(ds.n_mels, 1.0f);
  if (!ds.train.empty()) {
    std::vector<double> sum(ds.n_mels, 0.0), sumsq(ds.n_mels, 0.0);
    int64_t frames = 0;
    for (const auto& s : ds.train) {
      for (int t = 0; t < s.rows; ++t)
        for (int m = 0; m < ds.n_mels; ++m) {
          const double v = s.features[static_cast<size_t>(t) * ds.n_mels + m];
          sum[m] += v;
          sumsq[m] += v * v;
        }
      frames += s.rows;
    }
    for (int m = 0; m < ds.n_mels; ++m) {
      const double mean = sum[m] / static_cast<double>(frames);
      const double var =
          std::max(0.0, sumsq[m] / static_cast<double>(frames) - mean * mean);
      ds.norm.mean[m] = static_cast<float>(mean);
      ds.norm.std[m] = static_cast<float>(std::sqrt(var));
    }
  }
  return ds;
}

std::vector<double> InverseFrequencyWeights(const std::vector<int>& counts) {
  if (counts.empty()) throw ParameterError("empty class count vector");
  int64_t total = 0;
  for (int c : counts) {
    if (c < 0) throw ParameterError("negative class count");
    total += c;
  }
  if (total == 0) throw ParameterError("no samples in any class");
  std::vector<double> w(counts.size());
  for (size_t k = 0; k < counts.size(); ++k)
    w[k] = static_cast<double>(total) /
           (static_cast<double>(counts.size()) *
            static_cast<double>(std::max(counts[k], 1)));
  return w;
}

MtlWeights ResolveClassWeights(MtlWeights base, const Dataset& dataset) {
  std::vector<int> breath(3, 0), noise(2, 0);
  for (const auto& s : dataset.train) {
    if (s.breath_class >= 0 && s.breath_class < 3) ++breath[s.breath_class];
    if (s.noise_class >= 0 && s.noise_class < 2) ++noise[s.noise_class];
  }
  base.class_weights_breath = InverseFrequencyWeights(breath);
  base.class_weights_noise = InverseFrequencyWeights(noise);
  return base;
}

std::vector<std::vector<int>> MakeBatches(const std::vector<TrainSample>& split,
                                          int batch_size, uint64_t seed,
                                          int epoch) {
  if (split.empty()) throw ParameterError("cannot batch an empty split");
  if (batch_size < 2) throw ParameterError("batch_size must be >= 2");
  if (epoch < 1) throw ParameterError("epoch is 1-based");

  std::vector<int> order(split.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&split](int a, int b) {
    if (split[a].rows != split[b].rows) return split[a].rows < split[b].rows;
    return split[a].id < split[b].id;
  });

  Rng rng(Rng::Derive(Rng::Derive(seed, "batches"),
                      static_cast<uint64_t>(epoch)));
  const size_t span = static_cast<size_t>(batch_size) * 4;  // bucket width
  for (size_t b0 = 0; b0 < order.size(); b0 += span) {
    const size_t b1 = std::min(order.size(), b0 + span);
    std::vector<int> bucket(order.begin() + b0, order.begin() + b1);
    FisherYates(&bucket, &rng);
    std::copy(bucket.begin(), bucket.end(), order.begin() + b0);
  }

  std::vector<std::vector<int>> batches;
  for (size_t i = 0; i < order.size(); i += batch_size) {
    const size_t j = std::min(order.size(), i + batch_size);
    if (j - i < 2) break;  // a lone sample cannot contribute to batch CCC
    batches.emplace_back(order.begin() + i, order.begin() + j);
  }
  ShuffleInPlace(&batches, &rng);
  return batches;
}

PackedBatch PackBatch(const std::vector<TrainSample>& split,
                      const std::vector<int>& indices, const NormStats& norm) {
  if (indices.empty()) throw ParameterError("empty batch");
  const int64_t B = static_cast<int64_t>(indices.size());
  int64_t Tmax = 0;
  const int64_t D = static_cast<int64_t>(norm.mean.size());
  for (int idx : indices)
    Tmax = std::max<int64_t>(Tmax, split[idx].rows);

  std::vector<float> x(static_cast<size_t>(B) * Tmax * D, 0.0f);
  std::vector<float> mask(static_cast<size_t>(B) * Tmax, 0.0f);
  PackedBatch out;
  for (int64_t b = 0; b < B; ++b) {
    const TrainSample& s = split[indices[b]];
    if (static_cast<int64_t>(s.features.size()) != s.rows * D)
      throw ShapeError("sample '" + s.id + "' feature size mismatch");
    for (int64_t t = 0; t < s.rows; ++t) {
      for (int64_t m = 0; m < D; ++m) {
        const float sd = std::max(norm.std[m], 1e-6f);
        x[(b * Tmax + t) * D + m] =
            (s.features[t * D + m] - norm.mean[m]) / sd;
      }
      mask[b * Tmax + t] = 1.0f;
    }
    out.targets.rr_norm.push_back(s.rr_bpm / kRrNormDivisor);
    out.targets.rc_norm.push_back(s.rc / kRcNormDivisor);
    out.targets.breath_class.push_back(s.breath_class);
    out.targets.noise_class.push_back(s.noise_class);
  }
  out.x = Tape::Constant(Shape::Cube(B, Tmax, D), std::move(x));
  out.mask = Tape::Constant(Shape::Mat(B, Tmax), std::move(mask));
  return out;
}

void AdamStep(ModelParams* params, AdamState* state, const TrainConfig& cfg) {
  auto& p = *params;
  if (state->m.empty()) {
    state->m.resize(p.tensors.size());
    state->v.resize(p.tensors.size());
    for (size_t i = 0; i < p.tensors.size(); ++i) {
      const size_t n = static_cast<size_t>(p.tensors[i].shape().numel());
      state->m[i].assign(n, 0.0f);
      state->v[i].assign(n, 0.0f);
    }
  }
  if (state->m.size() != p.tensors.size())
    throw ParameterError("optimizer state does not match parameter count");

  double norm_sq = 0.0;
  for (size_t i = 0; i < p.tensors.size(); ++i) {
    const auto& t = p.tensors[i];
    if (!t.has_grad()) continue;
    for (float g : t.grad()) {
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in parameter '" + p.names[i] +
                           "'");
      norm_sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  const double norm = std::sqrt(norm_sq);
  const float scale =
      (cfg.grad_clip_norm > 0.0 && norm > cfg.grad_clip_norm)
          ? static_cast<float>(cfg.grad_clip_norm / norm)
          : 1.0f;

  ++state->step;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, state->step);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, state->step);
  const float b1 = static_cast<float>(cfg.adam_beta1);
  const float b2 = static_cast<float>(cfg.adam_beta2);
  const float lr = static_cast<float>(cfg.learning_rate);
  const float eps = static_cast<float>(cfg.adam_eps);
  const float inv_bc1 = static_cast<float>(1.0 / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);

  for (size_t i = 0; i < p.tensors.size(); ++i) {
    auto& t = p.tensors[i];
    const size_t n = static_cast<size_t>(t.shape().numel());
    if (state->m[i].size() != n)
      throw ParameterError("optimizer moment shape mismatch for '" +
                           p.names[i] + "'");
    const bool has = t.has_grad();
    float* mv = state->m[i].data();
    float* vv = state->v[i].data();
    float* pv = t.val().data();
    const float* gv = has ? t.grad().data() : nullptr;
    for (size_t j = 0; j < n; ++j) {
      const float g = has ? gv[j] * scale : 0.0f;
      mv[j] = b1 * mv[j] + (1.0f - b1) * g;
      vv[j] = b2 * vv[j] + (1.0f - b2) * g * g;
      const float mhat = mv[j] * inv_bc1;
      const float vhat = vv[j] * inv_bc2;
      pv[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

SplitPredictions PredictSplit(const ModelParams& params, const NormStats& norm,
                              const std::vector<TrainSample>& split,
                              int batch_size) {
  if (split.empty()) throw ParameterError("cannot evaluate an empty split");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");

  std::vector<int> order(split.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&split](int a, int b) {
    if (split[a].rows != split[b].rows) return split[a].rows < split[b].rows;
    return split[a].id < split[b].id;
  });

  SplitPredictions out;
  for (size_t i0 = 0; i0 < order.size(); i0 += batch_size) {
    const size_t i1 = std::min(order.size(), i0 + batch_size);
    const std::vector<int> idx(order.begin() + i0, order.begin() + i1);
    PackedBatch batch = PackBatch(split, idx, norm);
    Tape tape;
    tape.SetGradEnabled(false);
    // Inference on leaves that carry requires_grad: disabling the tape keeps
    // the pass recording-free.
    auto fw = ModelForward(&tape, params, batch.x, batch.mask);
    auto bp = tape.SoftmaxRows(fw.breath_logits);
    auto np = tape.SoftmaxRows(fw.noise_logits);
    const int64_t B = static_cast<int64_t>(idx.size());
    const int Kb = params.config.n_breath_classes;
    const int Kn = params.config.n_noise_classes;
    for (int64_t b = 0; b < B; ++b) {
      const TrainSample& s = split[idx[b]];
      out.rr_pred.push_back(static_cast<double>(fw.rr.val()[b]) *
                            kRrNormDivisor);
      out.rr_true.push_back(s.rr_bpm);
      out.rc_pred.push_back(static_cast<double>(fw.rc.val()[b]) *
                            kRcNormDivisor);
      out.rc_true.push_back(static_cast<double>(s.rc));
      const float* bpv = bp.val().data() + b * Kb;
      const float* npv = np.val().data() + b * Kn;
      out.breath_pred.push_back(static_cast<int>(
          std::max_element(bpv, bpv + Kb) - bpv));
      out.breath_true.push_back(s.breath_class);
      out.noise_pred.push_back(static_cast<int>(
          std::max_element(npv, npv + Kn) - npv));
      out.noise_true.push_back(s.noise_class);
      out.gender.push_back(s.gender);
      out.id.push_back(s.id);
    }
  }
  return out;
}

TrainResult Train(const ModelConfig& model_config, const Dataset& dataset,
                  const TrainConfig& train_config, const MtlWeights& weights) {
  model_config.Validate();
  train_config.Validate();
  weights.Validate();
  if (dataset.train.size() < 2)
    throw ParameterError("training split needs at least 2 segments");
  if (dataset.validation.empty())
    throw ParameterError("validation split is empty");
  if (dataset.n_mels != model_config.n_mels)
    throw ShapeError("dataset has " + std::to_string(dataset.n_mels) +
                     " mel channels but model expects " +
                     std::to_string(model_config.n_mels));

  ModelParams params = InitModelParams<float>(
      model_config, Rng::Derive(train_config.seed, "init"));
  AdamState adam;
  DwaState dwa;

  TrainResult result;
  result.log_csv =
      "epoch,loss_ccc,loss_ce_breath,loss_ce_noise,loss_focal_breath,"
      "lambda_ccc,lambda_ce_breath,lambda_ce_noise,lambda_focal_breath,"
      "val_ccc_rr\n";

  int since_improvement = 0;
  for (int epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = MakeBatches(dataset.train, train_config.batch_size,
                                     train_config.seed, epoch);
    if (batches.empty())
      throw ParameterError("training split too small for one batch");

    std::array<double, kNumTasks> task_sums{};
    double total_sum = 0.0;
    int64_t seen = 0;
    for (const auto& idx : batches) {
      PackedBatch batch = PackBatch(dataset.train, idx, dataset.norm);
      Tape tape;
      auto fw = ModelForward(&tape, params, batch.x, batch.mask);
      auto parts = MtlLossGraph(&tape, fw, batch.targets, weights, dwa);
      const double n = static_cast<double>(idx.size());
      task_sums[0] += static_cast<double>(parts.ccc_cost.item()) * n;
      task_sums[1] += static_cast<double>(parts.ce_breath.item()) * n;
      task_sums[2] += static_cast<double>(parts.ce_noise.item()) * n;
      task_sums[3] += static_cast<double>(parts.focal_breath.item()) * n;
      total_sum += static_cast<double>(parts.total.item()) * n;
      seen += static_cast<int64_t>(idx.size());
      tape.Backward(parts.total, /*release_graph=*/true);
      AdamStep(&params, &adam, train_config);
      for (auto& t : params.tensors) t.data()->grad.clear();
    }
    std::array<double, kNumTasks> task_means{};
    for (int k = 0; k < kNumTasks; ++k)
      task_means[k] = task_sums[k] / static_cast<double>(seen);
    result.epoch_total_loss.push_back(total_sum / static_cast<double>(seen));

    double val_ccc = std::numeric_limits<double>::quiet_NaN();
    const auto val_preds = PredictSplit(params, dataset.norm,
                                        dataset.validation,
                                        train_config.batch_size);
    try {
      val_ccc = Ccc(val_preds.rr_pred, val_preds.rr_true);
    } catch (const DegenerateInputError&) {
      RESPR_WARN << "validation CCC degenerate at epoch " << epoch
                 << " (constant predictions); treated as no improvement";
    }

    result.log_csv += std::to_string(epoch);
    for (int k = 0; k < kNumTasks; ++k)
      result.log_csv += "," + FormatG(task_means[k]);
    for (int k = 0; k < kNumTasks; ++k)
      result.log_csv += "," + FormatG(dwa.lambda[k]);
    result.log_csv += "," + FormatG(val_ccc) + "\n";

    const bool improved =
        std::isfinite(val_ccc) &&
        (result.best_epoch == 0 || val_ccc > result.best_val_ccc);
    if (improved) {
      result.best_epoch = epoch;
      result.best_val_ccc = val_ccc;
      result.best.params = CloneParams(params);
      since_improvement = 0;
    } else {
      ++since_improvement;
    }

    DwaUpdate(&dwa, task_means, weights.dwa_temperature);
    result.epochs_run = epoch;

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    RESPR_LOG << "epoch " << epoch << " loss " << FormatG(result.epoch_total_loss.back())
              << " val_ccc_rr " << FormatG(val_ccc) << " ("
              << FormatG(secs) << " s)";

    if (since_improvement >= train_config.patience) {
      RESPR_LOG << "early stop after " << epoch << " epochs; best epoch "
                << result.best_epoch;
      break;
    }
  }

  if (result.best_epoch == 0) {
    RESPR_WARN << "validation CCC never defined; keeping final parameters";
    result.best_epoch = result.epochs_run;
    result.best.params = CloneParams(params);
  }
  result.best.norm = dataset.norm;
  result.best.metadata["best_epoch"] = std::to_string(result.best_epoch);
  result.best.metadata["best_val_ccc_rr"] = FormatG(result.best_val_ccc);
  result.best.metadata["epochs_run"] = std::to_string(result.epochs_run);
  result.best.metadata["n_lstm"] = std::to_string(model_config.n_lstm);
  result.best.metadata["time_conv"] = model_config.time_conv ? "1" : "0";
  result.best.metadata["seed"] = std::to_string(train_config.seed);
  result.best.metadata["batch_size"] = std::to_string(train_config.batch_size);
  result.best.metadata["learning_rate"] = FormatG(train_config.learning_rate);
  return result;
}

}  // namespace respr
