// respr/trainer.h

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
//
// Mini-batch training: bucketed variable-length batching with padding masks,
// Adam with global gradient-norm clipping, dynamic weight averaging across
// tasks, early stopping on validation CCC, and best-epoch retention. A fixed
// seed makes the whole run — batches, parameters, log bytes — reproducible.

#ifndef RESPR_TRAINER_H_
#define RESPR_TRAINER_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "respr/losses.h"
#include "respr/manifest.h"
#include "respr/model.h"

namespace respr {

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_epochs = 50;
  int patience = 10;
  uint64_t seed = 0;
  double grad_clip_norm = 5.0;
  void Validate() const;
};

// One segment ready for training: raw (unnormalized) float features plus
// targets. Normalization happens at batch-assembly time with the dataset's
// training-split statistics.
struct TrainSample {
  std::string id;
  int rows = 0;
  std::vector<float> features;  // rows * n_mels, row-major
  double rr_bpm = 0.0;
  int rc = 0;
  int breath_class = 0;
  int noise_class = 0;
  std::string gender;
};

struct Dataset {
  int n_mels = 0;
  std::vector<TrainSample> train;
  std::vector<TrainSample> validation;
  std::vector<TrainSample> evaluation;
  NormStats norm;  // estimated on the train split
};

using FeatureLoadFn = std::function<FeatureMatrix(const SegmentLabel&)>;

// Assembles a Dataset from manifest rows, loading features through the
// callback, and estimates normalization statistics on the train split.
Dataset BuildDataset(const std::vector<SegmentLabel>& manifest,
                     const FeatureLoadFn& load_features);

// N / (K * count_k) per class, with absent classes clamped to count 1.
std::vector<double> InverseFrequencyWeights(const std::vector<int>& counts);

// Fills both class-weight vectors from the dataset's training split.
MtlWeights ResolveClassWeights(MtlWeights base, const Dataset& dataset);

// Per-epoch batch composition: samples sorted by length into buckets,
// shuffled within buckets by the epoch seed, cut into batches of batch_size
// (a trailing batch of one is dropped — CCC needs two points), batch order
// shuffled. Returns indices into `split`.
std::vector<std::vector<int>> MakeBatches(const std::vector<TrainSample>& split,
                                          int batch_size, uint64_t seed,
                                          int epoch);

// A padded batch: x is (B, Tmax, n_mels) normalized features, mask is
// (B, Tmax) frame validity.
struct PackedBatch {
  Tensor x;
  Tensor mask;
  BatchTargets targets;
};

PackedBatch PackBatch(const std::vector<TrainSample>& split,
                      const std::vector<int>& indices, const NormStats& norm);

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  int64_t step = 0;
};

// Global-norm clipping followed by a bias-corrected Adam update. Missing
// gradients count as zeros; non-finite gradients raise NumericError naming
// the parameter.
void AdamStep(ModelParams* params, AdamState* state, const TrainConfig& cfg);

// Deterministic forward pass over a split; predictions in label units.
struct SplitPredictions {
  std::vector<double> rr_pred, rr_true;  // bpm
  std::vector<double> rc_pred, rc_true;  // cycle counts
  std::vector<int> breath_pred, breath_true;
  std::vector<int> noise_pred, noise_true;
  std::vector<std::string> gender;  // aligned metadata
  std::vector<std::string> id;
};

SplitPredictions PredictSplit(const ModelParams& params, const NormStats& norm,
                              const std::vector<TrainSample>& split,
                              int batch_size);

struct TrainResult {
  ModelBundle best;          // parameters from the best epoch
  std::string log_csv;       // one row per epoch, schema in the header line
  int best_epoch = 0;        // 1-based; 0 if validation never produced a CCC
  double best_val_ccc = 0.0;
  int epochs_run = 0;
  std::vector<double> epoch_total_loss;  // train means, one per epoch
};

// Full training run. Logs progress to stderr; everything returned (checkpoint
// bytes, CSV bytes) is a pure function of (model config, dataset, train
// config, weights).
TrainResult Train(const ModelConfig& model_config, const Dataset& dataset,
                  const TrainConfig& train_config, const MtlWeights& weights);

}  // namespace respr

#endif  // RESPR_TRAINER_H_
