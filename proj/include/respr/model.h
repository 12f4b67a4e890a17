// respr/model.h

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
// Multi-task recurrent estimator for respiratory rate: an optional
// time-convolution front end, a single LSTM layer, and three heads off two
// embeddings of the final hidden state. Regression targets are normalized
// (rate / 60, breath count / 7) and denormalized again at prediction time.

#ifndef RESPR_MODEL_H_
#define RESPR_MODEL_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "respr/features.h"
#include "respr/tensor.h"

namespace respr {

constexpr double kRrNormDivisor = 60.0;
constexpr double kRcNormDivisor = 7.0;

struct ModelConfig {
  int n_mels = 40;
  int n_lstm = 32;
  bool time_conv = true;  // TC-LSTM when true, plain LSTM otherwise
  int conv_kernel = 3;
  int n_breath_classes = 3;  // no_breathing, normal, heavy
  int n_noise_classes = 2;   // noiseless, noisy

  int breath_embed_dim() const { return n_lstm; }
  int noise_embed_dim() const { return n_lstm / 4 > 0 ? n_lstm / 4 : 1; }
  void Validate() const;
};

// Parameter tensors in a fixed, named order (also the checkpoint order).
template <typename S>
struct ModelParamsT {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<TensorT<S>> tensors;

  TensorT<S>& Get(const std::string& name) {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return tensors[i];
    throw ParameterError("unknown model parameter '" + name + "'");
  }
  const TensorT<S>& Get(const std::string& name) const {
    return const_cast<ModelParamsT*>(this)->Get(name);
  }
  int64_t ParameterCount() const {
    int64_t n = 0;
    for (const auto& t : tensors) n += t.shape().numel();
    return n;
  }
};

using ModelParams = ModelParamsT<float>;

// Fresh parameters: uniform fan-in init for input-side weights, orthogonal
// blocks for the recurrent matrix, zero biases except the forget-gate bias
// which starts at 1. Draws consume the generator in declaration order, so a
// seed pins every value.
template <typename S>
ModelParamsT<S> InitModelParams(const ModelConfig& config, uint64_t seed);

extern template ModelParamsT<float> InitModelParams<float>(const ModelConfig&,
                                                           uint64_t);
extern template ModelParamsT<double> InitModelParams<double>(
    const ModelConfig&, uint64_t);

template <typename S>
struct ForwardOutT {
  TensorT<S> rr;             // (B, 1) normalized respiratory rate
  TensorT<S> rc;             // (B, 1) normalized breath count
  TensorT<S> breath_logits;  // (B, n_breath_classes)
  TensorT<S> noise_logits;   // (B, n_noise_classes)
};

// Runs the network on a padded batch. x is (B, T, n_mels) of normalized
// features; mask is (B, T) with ones on real frames and zeros on padding.
// Padded frames are zeroed before the front end so the convolution never
// reads them, and the recurrent state freezes once the mask turns zero, so
// the heads see the hidden state at each sequence's true final frame.
template <typename S>
ForwardOutT<S> ModelForward(TapeT<S>* tape, const ModelParamsT<S>& params,
                            const TensorT<S>& x, const TensorT<S>& mask);

extern template ForwardOutT<float> ModelForward<float>(TapeT<float>*,
                                                       const ModelParamsT<float>&,
                                                       const TensorT<float>&,
                                                       const TensorT<float>&);
extern template ForwardOutT<double> ModelForward<double>(
    TapeT<double>*, const ModelParamsT<double>&, const TensorT<double>&,
    const TensorT<double>&);

// Per-dimension feature statistics estimated on the training split.
struct NormStats {
  std::vector<float> mean;  // size n_mels
  std::vector<float> std;   // size n_mels, floored when applied
};

struct ModelBundle {
  ModelParams params;
  NormStats norm;
  std::map<std::string, std::string> metadata;
};

// Checkpoint container: magic + version, a JSON header describing config,
// normalization and tensor shapes, then raw little-endian float32 payloads
// in header order. Round trips are byte-exact.
void SaveModel(const std::string& path, const ModelBundle& bundle);
ModelBundle LoadModel(const std::string& path);

struct SegmentPrediction {
  double rr_bpm = 0.0;
  double rc = 0.0;
  std::string breath_class;
  std::string noise_label;
  std::vector<double> breath_probs;
  std::vector<double> noise_probs;
};

// Single-segment inference: normalizes features with the bundle statistics,
// runs the forward pass without recording gradients, denormalizes the
// regression outputs and argmaxes the classifier heads.
SegmentPrediction Predict(const ModelBundle& bundle, const FeatureMatrix& f);

}  // namespace respr

#endif  // RESPR_MODEL_H_
