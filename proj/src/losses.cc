// src/losses.cc

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

#include "respr/losses.h"

#include <algorithm>
#include <cmath>

#include "respr/common.h"

namespace respr {

namespace {

struct Moments {
  double mean_x = 0, mean_y = 0, var_x = 0, var_y = 0, cov = 0;
};

Moments PopulationMoments(const std::vector<double>& x,
                          const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ParameterError("length mismatch: " + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()));
  if (x.size() < 2)
    throw ParameterError("need at least 2 samples, got " +
                         std::to_string(x.size()));
  const double n = static_cast<double>(x.size());
  Moments m;
  for (size_t i = 0; i < x.size(); ++i) {
    m.mean_x += x[i];
    m.mean_y += y[i];
  }
  m.mean_x /= n;
  m.mean_y /= n;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - m.mean_x;
    const double dy = y[i] - m.mean_y;
    m.var_x += dx * dx;
    m.var_y += dy * dy;
    m.cov += dx * dy;
  }
  m.var_x /= n;
  m.var_y /= n;
  m.cov /= n;
  return m;
}

void CheckClassInputs(const std::vector<double>& logits, int target,
                      const std::vector<double>& w) {
  if (logits.empty()) throw ParameterError("empty logits");
  if (target < 0 || static_cast<size_t>(target) >= logits.size())
    throw ParameterError("target index " + std::to_string(target) +
                         " out of range for " + std::to_string(logits.size()) +
                         " classes");
  if (w.size() != logits.size())
    throw ParameterError("class weight count does not match class count");
  for (double v : w)
    if (!(v > 0.0)) throw ParameterError("class weights must be positive");
}

double LogSumExp(const std::vector<double>& x) {
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

double PearsonR(const std::vector<double>& x, const std::vector<double>& y) {
  const Moments m = PopulationMoments(x, y);
  const double denom = std::sqrt(m.var_x) * std::sqrt(m.var_y);
  if (denom == 0.0)
    throw DegenerateInputError("pearson undefined for constant input");
  return m.cov / denom;
}

double Ccc(const std::vector<double>& x, const std::vector<double>& y) {
  const Moments m = PopulationMoments(x, y);
  const double gap = m.mean_x - m.mean_y;
  const double denom = m.var_x + m.var_y + gap * gap;
  if (denom == 0.0)
    throw DegenerateInputError("ccc undefined: both inputs constant and equal");
  return 2.0 * m.cov / denom;
}

double Mse(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty())
    throw ParameterError("mse needs equal-length non-empty inputs");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return acc / static_cast<double>(x.size());
}

double WeightedCe(const std::vector<double>& logits, int target,
                  const std::vector<double>& w) {
  CheckClassInputs(logits, target, w);
  return w[target] * (-logits[target] + LogSumExp(logits));
}

double FocalLoss(const std::vector<double>& logits, int target,
                 const std::vector<double>& w, double gamma_focal) {
  CheckClassInputs(logits, target, w);
  if (gamma_focal < 0.0) throw ParameterError("gamma_focal must be >= 0");
  const double neg_log_p = -logits[target] + LogSumExp(logits);
  const double p = std::exp(-neg_log_p);
  return w[target] * std::pow(1.0 - p, gamma_focal) * neg_log_p;
}

void MtlWeights::Validate() const {
  if (alpha < 0.0 || alpha > 1.0)
    throw ParameterError("alpha must be in [0,1]");
  if (beta < 0.0 || gamma < 0.0 || kappa < 0.0)
    throw ParameterError("mixture coefficients must be non-negative");
  if (beta + gamma + kappa > 1.0 + 1e-12)
    throw ParameterError("beta + gamma + kappa must be <= 1 (got " +
                         std::to_string(beta + gamma + kappa) + ")");
  if (gamma_focal < 0.0) throw ParameterError("gamma_focal must be >= 0");
  if (dwa_temperature <= 0.0)
    throw ParameterError("dwa_temperature must be > 0");
  if (class_weights_breath.size() != 3 || class_weights_noise.size() != 2)
    throw ParameterError("expected 3 breath and 2 noise class weights");
  for (double v : class_weights_breath)
    if (!(v > 0.0)) throw ParameterError("breath class weights must be > 0");
  for (double v : class_weights_noise)
    if (!(v > 0.0)) throw ParameterError("noise class weights must be > 0");
}

void DwaUpdate(DwaState* state, const std::array<double, kNumTasks>& losses,
               double temperature) {
  if (temperature <= 0.0) throw ParameterError("dwa temperature must be > 0");
  for (double v : losses)
    if (!std::isfinite(v) || v < 0.0)
      throw NumericError("dwa update requires finite non-negative losses");
  state->prev2 = state->prev1;
  state->prev1 = losses;
  ++state->epochs_seen;
  if (state->epochs_seen < 2) {
    state->lambda.fill(1.0);
    return;
  }
  std::array<double, kNumTasks> r{};
  for (int k = 0; k < kNumTasks; ++k)
    r[k] = state->prev1[k] / std::max(state->prev2[k], 1e-12);
  const double rmax = *std::max_element(r.begin(), r.end());
  double denom = 0.0;
  std::array<double, kNumTasks> e{};
  for (int k = 0; k < kNumTasks; ++k) {
    e[k] = std::exp((r[k] - rmax) / temperature);
    denom += e[k];
  }
  for (int k = 0; k < kNumTasks; ++k)
    state->lambda[k] = kNumTasks * e[k] / denom;
}

// ---- graph builders ----------------------------------------------------------

namespace {

template <typename S>
void RequireColumn(const char* what, const TensorT<S>& t) {
  if (t.shape().rank != 2 || t.shape().d[1] != 1 || t.shape().d[0] < 2)
    throw ShapeError(std::string(what) +
                     " must be a (B,1) column with B >= 2, got " +
                     t.shape().Str());
}

// One-hot (B, K) constant plus the (B, 1) per-sample weight column.
template <typename S>
std::pair<TensorT<S>, TensorT<S>> OneHotAndWeights(
    const TensorT<S>& logits, const std::vector<int>& targets,
    const std::vector<double>& w) {
  if (logits.shape().rank != 2)
    throw ShapeError("logits must be (B,K), got " + logits.shape().Str());
  const int64_t B = logits.shape().d[0], K = logits.shape().d[1];
  if (static_cast<int64_t>(targets.size()) != B)
    throw ParameterError("target count " + std::to_string(targets.size()) +
                         " does not match batch " + std::to_string(B));
  if (static_cast<int64_t>(w.size()) != K)
    throw ParameterError("class weight count does not match class count");
  for (double v : w)
    if (!(v > 0.0)) throw ParameterError("class weights must be positive");
  std::vector<S> onehot(static_cast<size_t>(B) * K, S(0));
  std::vector<S> wcol(static_cast<size_t>(B));
  for (int64_t i = 0; i < B; ++i) {
    const int t = targets[i];
    if (t < 0 || t >= K)
      throw ParameterError("target index " + std::to_string(t) +
                           " out of range for " + std::to_string(K) +
                           " classes");
    onehot[i * K + t] = S(1);
    wcol[i] = static_cast<S>(w[t]);
  }
  return {TapeT<S>::Constant(Shape::Mat(B, K), std::move(onehot)),
          TapeT<S>::Constant(Shape::Mat(B, 1), std::move(wcol))};
}

template <typename S>
double ColumnVariance(const TensorT<S>& t) {
  const auto& v = t.val();
  double mean = 0.0;
  for (S x : v) mean += static_cast<double>(x);
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (S x : v) {
    const double d = static_cast<double>(x) - mean;
    var += d * d;
  }
  return var / static_cast<double>(v.size());
}

}  // namespace

template <typename S>
TensorT<S> CccGraph(TapeT<S>* tape, const TensorT<S>& x, const TensorT<S>& y) {
  RequireColumn("ccc input", x);
  RequireColumn("ccc input", y);
  if (x.shape() != y.shape())
    throw ShapeError("ccc inputs must match: " + x.shape().Str() + " vs " +
                     y.shape().Str());
  TapeT<S>& tp = *tape;
  auto mx = tp.MeanAll(x);
  auto my = tp.MeanAll(y);
  auto dx = tp.Sub(x, mx);
  auto dy = tp.Sub(y, my);
  auto var_x = tp.MeanAll(tp.Mul(dx, dx));
  auto var_y = tp.MeanAll(tp.Mul(dy, dy));
  auto cov = tp.MeanAll(tp.Mul(dx, dy));
  auto gap = tp.Sub(mx, my);
  auto denom = tp.Add(tp.Add(var_x, var_y), tp.Mul(gap, gap));
  return tp.Div(tp.MulScalar(cov, S(2)), denom);
}

template <typename S>
TensorT<S> CccCostGraph(TapeT<S>* tape, const TensorT<S>& rr_pred,
                        const TensorT<S>& rr_true, const TensorT<S>& rc_pred,
                        const TensorT<S>& rc_true, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ParameterError("alpha must be in [0,1]");
  TapeT<S>& tp = *tape;
  auto rr_term =
      tp.AddScalar(tp.MulScalar(CccGraph(tape, rr_pred, rr_true), S(-1)), S(1));
  auto rc_term =
      tp.AddScalar(tp.MulScalar(CccGraph(tape, rc_pred, rc_true), S(-1)), S(1));
  return tp.Add(tp.MulScalar(rr_term, static_cast<S>(alpha)),
                tp.MulScalar(rc_term, static_cast<S>(1.0 - alpha)));
}

template <typename S>
TensorT<S> WeightedCeGraph(TapeT<S>* tape, const TensorT<S>& logits,
                           const std::vector<int>& targets,
                           const std::vector<double>& w) {
  TapeT<S>& tp = *tape;
  auto [onehot, wcol] = OneHotAndWeights(logits, targets, w);
  auto lse = tp.LogSumExpRows(logits);                         // (B,1)
  auto picked = tp.SumAxis(tp.Mul(logits, onehot), 1);         // (B,1)
  return tp.MeanAll(tp.Mul(tp.Sub(lse, picked), wcol));
}

template <typename S>
TensorT<S> FocalLossGraph(TapeT<S>* tape, const TensorT<S>& logits,
                          const std::vector<int>& targets,
                          const std::vector<double>& w, double gamma_focal) {
  if (gamma_focal < 0.0) throw ParameterError("gamma_focal must be >= 0");
  TapeT<S>& tp = *tape;
  auto [onehot, wcol] = OneHotAndWeights(logits, targets, w);
  auto lse = tp.LogSumExpRows(logits);
  auto picked = tp.SumAxis(tp.Mul(logits, onehot), 1);
  auto neg_log_p = tp.Sub(lse, picked);                        // (B,1), >= 0
  auto p = tp.Exp(tp.MulScalar(neg_log_p, S(-1)));
  auto one_minus_p = tp.AddScalar(tp.MulScalar(p, S(-1)), S(1));
  auto mod = tp.PowConst(one_minus_p, static_cast<S>(gamma_focal));
  return tp.MeanAll(tp.Mul(tp.Mul(mod, neg_log_p), wcol));
}

template <typename S>
MtlPartsT<S> MtlLossGraph(TapeT<S>* tape, const ForwardOutT<S>& out,
                          const BatchTargets& targets,
                          const MtlWeights& weights, const DwaState& dwa) {
  weights.Validate();
  const int64_t B = out.rr.shape().d[0];
  if (static_cast<int64_t>(targets.rr_norm.size()) != B ||
      static_cast<int64_t>(targets.rc_norm.size()) != B ||
      static_cast<int64_t>(targets.breath_class.size()) != B ||
      static_cast<int64_t>(targets.noise_class.size()) != B)
    throw ParameterError("batch target sizes do not match forward output");
  if (B < 2) throw ParameterError("mtl loss needs a batch of >= 2 samples");

  TapeT<S>& tp = *tape;
  std::vector<S> rr_t(B), rc_t(B);
  for (int64_t i = 0; i < B; ++i) {
    rr_t[i] = static_cast<S>(targets.rr_norm[i]);
    rc_t[i] = static_cast<S>(targets.rc_norm[i]);
  }
  auto rr_true = TapeT<S>::Constant(Shape::Mat(B, 1), std::move(rr_t));
  auto rc_true = TapeT<S>::Constant(Shape::Mat(B, 1), std::move(rc_t));

  MtlPartsT<S> parts;
  // A batch with constant targets and constant predictions has no defined
  // CCC; drop the term rather than divide 0 by 0.
  const double spread = ColumnVariance(rr_true) + ColumnVariance(rc_true) +
                        ColumnVariance(out.rr) + ColumnVariance(out.rc);
  parts.ccc_skipped = spread < 1e-20;
  if (parts.ccc_skipped) {
    RESPR_WARN << "degenerate batch: constant regression targets and "
                  "predictions; skipping CCC term";
    parts.ccc_cost = TapeT<S>::Scalar(S(0));
  } else {
    parts.ccc_cost = CccCostGraph(tape, out.rr, rr_true, out.rc, rc_true,
                                  weights.alpha);
  }
  parts.ce_breath = WeightedCeGraph(tape, out.breath_logits,
                                    targets.breath_class,
                                    weights.class_weights_breath);
  parts.ce_noise = WeightedCeGraph(tape, out.noise_logits, targets.noise_class,
                                   weights.class_weights_noise);
  parts.focal_breath =
      FocalLossGraph(tape, out.breath_logits, targets.breath_class,
                     weights.class_weights_breath, weights.gamma_focal);

  auto total = tp.MulScalar(parts.ccc_cost,
                            static_cast<S>(weights.beta * dwa.lambda[0]));
  total = tp.Add(total, tp.MulScalar(parts.ce_breath, static_cast<S>(
                                         weights.gamma * dwa.lambda[1])));
  total = tp.Add(total, tp.MulScalar(parts.ce_noise, static_cast<S>(
                                         weights.kappa * dwa.lambda[2])));
  total = tp.Add(total,
                 tp.MulScalar(parts.focal_breath,
                              static_cast<S>(weights.focal_residual() *
                                             dwa.lambda[3])));
  parts.total = total;
  return parts;
}

template TensorT<float> CccGraph<float>(TapeT<float>*, const TensorT<float>&,
                                        const TensorT<float>&);
template TensorT<double> CccGraph<double>(TapeT<double>*,
                                          const TensorT<double>&,
                                          const TensorT<double>&);
template TensorT<float> CccCostGraph<float>(TapeT<float>*,
                                            const TensorT<float>&,
                                            const TensorT<float>&,
                                            const TensorT<float>&,
                                            const TensorT<float>&, double);
template TensorT<double> CccCostGraph<double>(TapeT<double>*,
                                              const TensorT<double>&,
                                              const TensorT<double>&,
                                              const TensorT<double>&,
                                              const TensorT<double>&, double);
template TensorT<float> WeightedCeGraph<float>(TapeT<float>*,
                                               const TensorT<float>&,
                                               const std::vector<int>&,
                                               const std::vector<double>&);
template TensorT<double> WeightedCeGraph<double>(TapeT<double>*,
                                                 const TensorT<double>&,
                                                 const std::vector<int>&,
                                                 const std::vector<double>&);
template TensorT<float> FocalLossGraph<float>(TapeT<float>*,
                                              const TensorT<float>&,
                                              const std::vector<int>&,
                                              const std::vector<double>&,
                                              double);
template TensorT<double> FocalLossGraph<double>(TapeT<double>*,
                                                const TensorT<double>&,
                                                const std::vector<int>&,
                                                const std::vector<double>&,
                                                double);
template MtlPartsT<float> MtlLossGraph<float>(TapeT<float>*,
                                              const ForwardOutT<float>&,
                                              const BatchTargets&,
                                              const MtlWeights&,
                                              const DwaState&);
template MtlPartsT<double> MtlLossGraph<double>(TapeT<double>*,
                                                const ForwardOutT<double>&,
                                                const BatchTargets&,
                                                const MtlWeights&,
                                                const DwaState&);

}  // namespace respr
