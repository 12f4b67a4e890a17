// respr/metrics.h

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
// Evaluation metrics and report rendering. Correlation metrics (CCC, Pearson)
// are computed on denormalized rates in breaths per minute; MSE is reported in
// normalized target space. F1 is macro-averaged over classes present in the
// ground truth, scaled to [0, 100].

#ifndef RESPR_METRICS_H_
#define RESPR_METRICS_H_

#include <array>
#include <map>
#include <string>
#include <vector>

#include "respr/model.h"
#include "respr/trainer.h"

namespace respr {

// True-RR band edges: [0,15), [15,25], (25,inf).
constexpr double kRangeLowEdgeBpm = 15.0;
constexpr double kRangeHighEdgeBpm = 25.0;

struct RangeCell {
  bool present = false;
  int n = 0;
  double mse = 0.0;  // normalized space
};

struct MetricSet {
  int n = 0;
  double ccc_rr = 0.0;
  double pearson_rr = 0.0;
  double mse_rr = 0.0;            // normalized space
  bool ccc_degenerate = false;    // correlation undefined (constant stream)
  double f1_breath = 0.0;         // percent
  double f1_noise = 0.0;          // percent
  RangeCell below_15, from_15_to_25, above_25;
};

struct EvalReport {
  MetricSet overall;
  std::map<std::string, MetricSet> per_group;  // keyed by gender
  std::array<int, 20> rr_histogram{};          // true RR, 3-bpm bins on [0,60]
};

// Macro F1 in percent over classes with ground-truth support.
double MacroF1(const std::vector<int>& truth, const std::vector<int>& pred,
               int n_classes);

// Metrics over the subset of prediction rows given by `rows` (all rows when
// empty is not allowed — pass the full index range explicitly).
MetricSet ComputeMetricSet(const SplitPredictions& preds,
                           const std::vector<size_t>& rows);

// Runs the model over a split and aggregates overall plus per-gender metrics.
EvalReport Evaluate(const ModelBundle& bundle,
                    const std::vector<TrainSample>& split,
                    int batch_size = 64);

std::string EvalReportToJson(const EvalReport& report);
EvalReport EvalReportFromJson(const std::string& text);

struct NamedReport {
  std::string name;
  EvalReport report;
};

// Renders CSV tables (model comparison, per-range MSE) and SVG charts
// (RR histogram, per-range and per-gender bars) keyed by file name. The
// per-gender chart is replaced by a text note when no report carries gender
// groups.
std::map<std::string, std::string> ReportTables(
    const std::vector<NamedReport>& reports);

}  // namespace respr

#endif  // RESPR_METRICS_H_
