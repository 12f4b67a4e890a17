// respr/losses.h

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
// Objectives for the multi-task network: concordance-correlation (CCC)
// regression cost, weighted cross-entropy, focal loss, dynamic weight
// averaging across tasks, and their convex mixture. Scalar double-precision
// forms are the single source of truth for evaluation metrics; the graph
// builders express the same formulas on the autodiff tape.

#ifndef RESPR_LOSSES_H_
#define RESPR_LOSSES_H_

#include <array>
#include <vector>

#include "respr/model.h"
#include "respr/tensor.h"

namespace respr {

// ---- scalar reference implementations (population statistics) --------------

// Pearson product-moment correlation. Throws DegenerateInputError when either
// input is constant.
double PearsonR(const std::vector<double>& x, const std::vector<double>& y);

// Concordance correlation coefficient,
//   2*cov(x,y) / (var(x) + var(y) + (mean(x) - mean(y))^2),
// in [-1, 1]. Throws DegenerateInputError when both inputs are constant with
// equal means (0/0).
double Ccc(const std::vector<double>& x, const std::vector<double>& y);

double Mse(const std::vector<double>& x, const std::vector<double>& y);

// w[target] * (-logits[target] + logsumexp(logits)), max-subtracted.
double WeightedCe(const std::vector<double>& logits, int target,
                  const std::vector<double>& w);

// w[target] * (1 - p_t)^gamma_focal * (-log p_t), p_t = softmax(logits)[target].
double FocalLoss(const std::vector<double>& logits, int target,
                 const std::vector<double>& w, double gamma_focal);

// ---- task weighting ----------------------------------------------------------

struct MtlWeights {
  double alpha = 0.5;  // RR share inside the CCC cost
  double beta = 0.4;   // CCC cost coefficient
  double gamma = 0.2;  // breath cross-entropy coefficient
  double kappa = 0.2;  // noise cross-entropy coefficient; focal gets the rest
  double gamma_focal = 2.0;
  double dwa_temperature = 2.0;
  std::vector<double> class_weights_breath{1.0, 1.0, 1.0};
  std::vector<double> class_weights_noise{1.0, 1.0};

  double focal_residual() const { return 1.0 - beta - gamma - kappa; }
  void Validate() const;
};

// Task order everywhere: ccc, ce_breath, ce_noise, focal_breath.
constexpr int kNumTasks = 4;

struct DwaState {
  std::array<double, kNumTasks> lambda{1.0, 1.0, 1.0, 1.0};
  std::array<double, kNumTasks> prev1{};  // epoch t-1 mean task losses
  std::array<double, kNumTasks> prev2{};  // epoch t-2
  int epochs_seen = 0;
};

// Feeds one epoch of mean task losses. Lambdas stay at 1 until two epochs of
// history exist; afterwards lambda_k = K * softmax(r_k / T) with
// r_k = L_k(t-1) / L_k(t-2). Sum of lambdas is always the task count.
void DwaUpdate(DwaState* state, const std::array<double, kNumTasks>& losses,
               double temperature);

// ---- graph builders ------------------------------------------------------------

// Concordance correlation of two (B, 1) columns as a scalar graph node.
template <typename S>
TensorT<S> CccGraph(TapeT<S>* tape, const TensorT<S>& x, const TensorT<S>& y);

// alpha * (1 - CCC_rr) + (1 - alpha) * (1 - CCC_rc).
template <typename S>
TensorT<S> CccCostGraph(TapeT<S>* tape, const TensorT<S>& rr_pred,
                        const TensorT<S>& rr_true, const TensorT<S>& rc_pred,
                        const TensorT<S>& rc_true, double alpha);

// Batch mean of per-sample weighted cross-entropy over (B, K) logits.
template <typename S>
TensorT<S> WeightedCeGraph(TapeT<S>* tape, const TensorT<S>& logits,
                           const std::vector<int>& targets,
                           const std::vector<double>& w);

template <typename S>
TensorT<S> FocalLossGraph(TapeT<S>* tape, const TensorT<S>& logits,
                          const std::vector<int>& targets,
                          const std::vector<double>& w, double gamma_focal);

// Ground truth for one padded batch, aligned with the forward output rows.
struct BatchTargets {
  std::vector<double> rr_norm;      // rr_bpm / 60
  std::vector<double> rc_norm;      // rc / 7
  std::vector<int> breath_class;    // 0 no_breathing, 1 normal, 2 heavy
  std::vector<int> noise_class;     // 0 noiseless, 1 noisy
};

template <typename S>
struct MtlPartsT {
  TensorT<S> total;
  TensorT<S> ccc_cost;
  TensorT<S> ce_breath;
  TensorT<S> ce_noise;
  TensorT<S> focal_breath;
  bool ccc_skipped = false;  // degenerate batch, CCC term dropped
};

// The convex mixture
//   beta*l1*ccc_cost + gamma*l2*ce_breath + kappa*l3*ce_noise
//     + (1-beta-gamma-kappa)*l4*focal_breath
// with l_k the current DWA lambdas. A batch whose regression targets and
// predictions are all constant drops the CCC term with a warning.
template <typename S>
MtlPartsT<S> MtlLossGraph(TapeT<S>* tape, const ForwardOutT<S>& out,
                          const BatchTargets& targets,
                          const MtlWeights& weights, const DwaState& dwa);

extern template TensorT<float> CccGraph<float>(TapeT<float>*,
                                               const TensorT<float>&,
                                               const TensorT<float>&);
extern template TensorT<double> CccGraph<double>(TapeT<double>*,
                                                 const TensorT<double>&,
                                                 const TensorT<double>&);
extern template TensorT<float> CccCostGraph<float>(
    TapeT<float>*, const TensorT<float>&, const TensorT<float>&,
    const TensorT<float>&, const TensorT<float>&, double);
extern template TensorT<double> CccCostGraph<double>(
    TapeT<double>*, const TensorT<double>&, const TensorT<double>&,
    const TensorT<double>&, const TensorT<double>&, double);
extern template TensorT<float> WeightedCeGraph<float>(
    TapeT<float>*, const TensorT<float>&, const std::vector<int>&,
    const std::vector<double>&);
extern template TensorT<double> WeightedCeGraph<double>(
    TapeT<double>*, const TensorT<double>&, const std::vector<int>&,
    const std::vector<double>&);
extern template TensorT<float> FocalLossGraph<float>(
    TapeT<float>*, const TensorT<float>&, const std::vector<int>&,
    const std::vector<double>&, double);
extern template TensorT<double> FocalLossGraph<double>(
    TapeT<double>*, const TensorT<double>&, const std::vector<int>&,
    const std::vector<double>&, double);
extern template MtlPartsT<float> MtlLossGraph<float>(TapeT<float>*,
                                                     const ForwardOutT<float>&,
                                                     const BatchTargets&,
                                                     const MtlWeights&,
                                                     const DwaState&);
extern template MtlPartsT<double> MtlLossGraph<double>(
    TapeT<double>*, const ForwardOutT<double>&, const BatchTargets&,
    const MtlWeights&, const DwaState&);

}  // namespace respr

#endif  // RESPR_LOSSES_H_
