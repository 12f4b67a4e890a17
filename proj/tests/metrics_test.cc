// tests/metrics_test.cc

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

#include "respr/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "respr/common.h"
#include "respr/losses.h"
#include "respr/rng.h"

namespace respr {
namespace {

// Independent macro-F1 oracle: explicit confusion matrix, per-class precision
// and recall, mean F1 over classes that appear in the truth.
double MacroF1Oracle(const std::vector<int>& truth,
                     const std::vector<int>& pred, int n_classes) {
  std::vector<std::vector<int>> cm(n_classes, std::vector<int>(n_classes, 0));
  for (size_t i = 0; i < truth.size(); ++i) ++cm[truth[i]][pred[i]];
  double sum = 0.0;
  int supported = 0;
  for (int k = 0; k < n_classes; ++k) {
    int row = 0, col = 0;
    for (int j = 0; j < n_classes; ++j) {
      row += cm[k][j];  // ground-truth support
      col += cm[j][k];  // predicted as k
    }
    if (row == 0) continue;
    ++supported;
    const double prec = col > 0 ? static_cast<double>(cm[k][k]) / col : 0.0;
    const double rec = static_cast<double>(cm[k][k]) / row;
    if (prec + rec > 0.0) sum += 2.0 * prec * rec / (prec + rec);
  }
  return 100.0 * sum / supported;
}

// ---- macro F1 ---------------------------------------------------------------

TEST(MacroF1Test, PerfectIsHundredDisjointIsZero) {
  EXPECT_DOUBLE_EQ(MacroF1({0, 1, 2, 0}, {0, 1, 2, 0}, 3), 100.0);
  EXPECT_DOUBLE_EQ(MacroF1({0, 0, 1, 1}, {1, 1, 0, 0}, 2), 0.0);
}

TEST(MacroF1Test, HandComputedThreeClassCase) {
  // Confusion: class 0 (1 tp, 1 fn), class 1 (1 tp, 1 fn, 1 fp),
  // class 2 (2 tp, 1 fp). F1 = 2/3, 1/2, 4/5; macro = 100 * 59/90.
  const std::vector<int> truth = {0, 0, 1, 1, 2, 2};
  const std::vector<int> pred = {0, 1, 1, 2, 2, 2};
  EXPECT_NEAR(MacroF1(truth, pred, 3), 100.0 * 59.0 / 90.0, 1e-12);
  EXPECT_NEAR(MacroF1(truth, pred, 3), MacroF1Oracle(truth, pred, 3), 1e-12);
}

TEST(MacroF1Test, ClassesAbsentFromTruthAreSkipped) {
  // Class 2 never appears in the truth; the average runs over classes 0 and 1.
  EXPECT_DOUBLE_EQ(MacroF1({0, 1}, {0, 2}, 3), 50.0);
}

TEST(MacroF1Test, AgreesWithOracleOnRandomCases) {
  Rng rng(314);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_classes = 2 + static_cast<int>(rng.UniformInt(0, 2));
    const int n = 1 + static_cast<int>(rng.UniformInt(0, 39));
    std::vector<int> truth(n), pred(n);
    for (int i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.UniformInt(0, n_classes - 1));
      pred[i] = static_cast<int>(rng.UniformInt(0, n_classes - 1));
    }
    EXPECT_NEAR(MacroF1(truth, pred, n_classes),
                MacroF1Oracle(truth, pred, n_classes), 1e-12)
        << "trial " << trial;
  }
}

TEST(MacroF1Test, RejectsBadInputs) {
  EXPECT_THROW(MacroF1({}, {}, 2), ParameterError);
  EXPECT_THROW(MacroF1({0, 1}, {0}, 2), ParameterError);
  EXPECT_THROW(MacroF1({0, 2}, {0, 1}, 2), ParameterError);  // out of range
  EXPECT_THROW(MacroF1({0, -1}, {0, 1}, 2), ParameterError);
  EXPECT_THROW(MacroF1({0, 1}, {0, 1}, 1), ParameterError);
}

// ---- metric sets ------------------------------------------------------------

SplitPredictions MakePreds(const std::vector<double>& rr_true,
                           const std::vector<double>& rr_pred) {
  SplitPredictions p;
  p.rr_true = rr_true;
  p.rr_pred = rr_pred;
  const size_t n = rr_true.size();
  p.rc_true.assign(n, 3.0);
  p.rc_pred.assign(n, 3.0);
  for (size_t i = 0; i < n; ++i) {
    p.breath_true.push_back(static_cast<int>(i % 3));
    p.breath_pred.push_back(static_cast<int>(i % 3));
    p.noise_true.push_back(static_cast<int>(i % 2));
    p.noise_pred.push_back(static_cast<int>(i % 2));
    p.gender.push_back(i % 2 ? "female" : "male");
    p.id.push_back("seg" + std::to_string(i));
  }
  return p;
}

std::vector<size_t> AllRows(size_t n) {
  std::vector<size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

TEST(ComputeMetricSetTest, PerfectPredictions) {
  const auto preds = MakePreds({10, 20, 30, 40}, {10, 20, 30, 40});
  const auto m = ComputeMetricSet(preds, AllRows(4));
  EXPECT_EQ(m.n, 4);
  EXPECT_NEAR(m.ccc_rr, 1.0, 1e-12);
  EXPECT_NEAR(m.pearson_rr, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.mse_rr, 0.0);
  EXPECT_FALSE(m.ccc_degenerate);
  EXPECT_DOUBLE_EQ(m.f1_breath, 100.0);
  EXPECT_DOUBLE_EQ(m.f1_noise, 100.0);
}

TEST(ComputeMetricSetTest, CorrelationInBpmSpaceMseInNormalizedSpace) {
  const std::vector<double> t = {12, 18, 30}, p = {14, 16, 32};
  const auto m = ComputeMetricSet(MakePreds(t, p), AllRows(3));
  EXPECT_NEAR(m.ccc_rr, Ccc(p, t), 1e-12);
  EXPECT_NEAR(m.pearson_rr, PearsonR(p, t), 1e-12);
  // Every error is 2 bpm, i.e. 1/30 after the rr/60 normalization.
  EXPECT_NEAR(m.mse_rr, (1.0 / 30.0) * (1.0 / 30.0), 1e-15);

  ASSERT_TRUE(m.below_15.present);
  ASSERT_TRUE(m.from_15_to_25.present);
  ASSERT_TRUE(m.above_25.present);
  EXPECT_EQ(m.below_15.n, 1);
  EXPECT_EQ(m.from_15_to_25.n, 1);
  EXPECT_EQ(m.above_25.n, 1);
  EXPECT_NEAR(m.below_15.mse, (1.0 / 30.0) * (1.0 / 30.0), 1e-15);
}

TEST(ComputeMetricSetTest, RangeCellsPartitionTheRows) {
  Rng rng(55);
  std::vector<double> t(50), p(50);
  for (size_t i = 0; i < t.size(); ++i) {
    t[i] = rng.Uniform(0.0, 45.0);
    p[i] = t[i] + rng.Uniform(-3.0, 3.0);
  }
  const auto m = ComputeMetricSet(MakePreds(t, p), AllRows(50));
  EXPECT_EQ(m.below_15.n + m.from_15_to_25.n + m.above_25.n, 50);

  // Both band edges belong to the middle range.
  const auto edges = ComputeMetricSet(MakePreds({15.0, 25.0}, {15.0, 25.0}),
                                      AllRows(2));
  EXPECT_FALSE(edges.below_15.present);
  ASSERT_TRUE(edges.from_15_to_25.present);
  EXPECT_EQ(edges.from_15_to_25.n, 2);
  EXPECT_FALSE(edges.above_25.present);

  const auto outside = ComputeMetricSet(
      MakePreds({14.999, 25.001}, {14.0, 26.0}), AllRows(2));
  EXPECT_TRUE(outside.below_15.present);
  EXPECT_TRUE(outside.above_25.present);
  EXPECT_FALSE(outside.from_15_to_25.present);
}

TEST(ComputeMetricSetTest, ConstantStreamsFlagDegenerateCcc) {
  const auto m =
      ComputeMetricSet(MakePreds({17, 17, 17}, {17, 17, 17}), AllRows(3));
  EXPECT_TRUE(m.ccc_degenerate);
  EXPECT_DOUBLE_EQ(m.ccc_rr, 0.0);
  EXPECT_DOUBLE_EQ(m.mse_rr, 0.0);

  const auto single = ComputeMetricSet(MakePreds({17}, {18}), AllRows(1));
  EXPECT_TRUE(single.ccc_degenerate);
}

TEST(ComputeMetricSetTest, SubsetSelectsRows) {
  const auto preds = MakePreds({10, 20, 30}, {40, 20, 36});
  const auto m = ComputeMetricSet(preds, {1, 2});
  EXPECT_EQ(m.n, 2);
  // Errors are 0 and 6 bpm: mean of 0 and (0.1)^2.
  EXPECT_NEAR(m.mse_rr, 0.5 * 0.01, 1e-15);
}

TEST(ComputeMetricSetTest, RejectsBadSubsets) {
  const auto preds = MakePreds({10, 20}, {11, 21});
  EXPECT_THROW(ComputeMetricSet(preds, {}), ParameterError);
  EXPECT_THROW(ComputeMetricSet(preds, {0, 5}), ParameterError);
}

// ---- end-to-end evaluation -----------------------------------------------------

ModelBundle TinyBundle() {
  ModelConfig cfg;
  cfg.n_mels = 4;
  cfg.n_lstm = 4;
  ModelBundle b;
  b.params = InitModelParams<float>(cfg, 23);
  b.norm.mean.assign(4, 0.0f);
  b.norm.std.assign(4, 1.0f);
  return b;
}

std::vector<TrainSample> TinySplit(int n) {
  std::vector<TrainSample> split;
  Rng rng(87);
  for (int i = 0; i < n; ++i) {
    TrainSample s;
    s.id = "seg" + std::to_string(i);
    s.rows = 5 + static_cast<int>(rng.UniformInt(0, 5));
    s.features.resize(static_cast<size_t>(s.rows) * 4);
    for (auto& f : s.features) f = static_cast<float>(rng.Gaussian());
    s.rr_bpm = 6.0 + 3.0 * i;  // spreads across the histogram bins
    s.rc = 2 + i % 4;
    s.breath_class = i % 3;
    s.noise_class = i % 2;
    s.gender = i % 2 ? "female" : "male";
    split.push_back(std::move(s));
  }
  return split;
}

TEST(EvaluateTest, AggregatesOverallPerGenderAndHistogram) {
  const auto split = TinySplit(12);
  const auto report = Evaluate(TinyBundle(), split, 5);

  EXPECT_EQ(report.overall.n, 12);
  ASSERT_EQ(report.per_group.size(), 2u);
  EXPECT_EQ(report.per_group.at("male").n, 6);
  EXPECT_EQ(report.per_group.at("female").n, 6);

  const int hist_total = std::accumulate(report.rr_histogram.begin(),
                                         report.rr_histogram.end(), 0);
  EXPECT_EQ(hist_total, 12);
  // rr 6 + 3i for i in 0..11 puts exactly one segment in bins 2..13.
  for (int bin = 2; bin <= 13; ++bin)
    EXPECT_EQ(report.rr_histogram[bin], 1) << "bin " << bin;
  EXPECT_EQ(report.rr_histogram[0], 0);
}

TEST(EvaluateTest, HistogramClampsOutOfRangeRates) {
  auto split = TinySplit(2);
  split[0].rr_bpm = 0.0;
  split[1].rr_bpm = 75.0;  // beyond the top edge
  const auto report = Evaluate(TinyBundle(), split, 2);
  EXPECT_EQ(report.rr_histogram[0], 1);
  EXPECT_EQ(report.rr_histogram[19], 1);
}

// ---- JSON round trip --------------------------------------------------------------

EvalReport SampleReport() {
  EvalReport r;
  r.overall.n = 42;
  r.overall.ccc_rr = 0.87142314;
  r.overall.pearson_rr = 0.901;
  r.overall.mse_rr = 0.0123456789;
  r.overall.f1_breath = 88.25;
  r.overall.f1_noise = 91.5;
  r.overall.below_15 = {true, 10, 0.02};
  r.overall.from_15_to_25 = {true, 22, 0.011};
  // above_25 left absent on purpose.
  MetricSet g = r.overall;
  g.n = 20;
  g.ccc_degenerate = true;
  r.per_group["female"] = g;
  r.per_group["male"] = r.overall;
  for (size_t i = 0; i < r.rr_histogram.size(); ++i)
    r.rr_histogram[i] = static_cast<int>(i * i % 7);
  return r;
}

void ExpectMetricSetEq(const MetricSet& a, const MetricSet& b) {
  EXPECT_EQ(a.n, b.n);
  EXPECT_DOUBLE_EQ(a.ccc_rr, b.ccc_rr);
  EXPECT_DOUBLE_EQ(a.pearson_rr, b.pearson_rr);
  EXPECT_DOUBLE_EQ(a.mse_rr, b.mse_rr);
  EXPECT_EQ(a.ccc_degenerate, b.ccc_degenerate);
  EXPECT_DOUBLE_EQ(a.f1_breath, b.f1_breath);
  EXPECT_DOUBLE_EQ(a.f1_noise, b.f1_noise);
  const RangeCell* ca[3] = {&a.below_15, &a.from_15_to_25, &a.above_25};
  const RangeCell* cb[3] = {&b.below_15, &b.from_15_to_25, &b.above_25};
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(ca[i]->present, cb[i]->present);
    EXPECT_EQ(ca[i]->n, cb[i]->n);
    EXPECT_DOUBLE_EQ(ca[i]->mse, cb[i]->mse);
  }
}

TEST(ReportJsonTest, RoundTripPreservesEveryField) {
  const auto report = SampleReport();
  const auto loaded = EvalReportFromJson(EvalReportToJson(report));
  ExpectMetricSetEq(loaded.overall, report.overall);
  ASSERT_EQ(loaded.per_group.size(), report.per_group.size());
  ExpectMetricSetEq(loaded.per_group.at("female"),
                    report.per_group.at("female"));
  ExpectMetricSetEq(loaded.per_group.at("male"), report.per_group.at("male"));
  EXPECT_EQ(loaded.rr_histogram, report.rr_histogram);

  // Serialization is stable: a second round trip gives identical bytes.
  EXPECT_EQ(EvalReportToJson(loaded), EvalReportToJson(report));
}

TEST(ReportJsonTest, RejectsMalformedDocuments) {
  EXPECT_THROW(EvalReportFromJson("not json at all"), FormatError);
  EXPECT_THROW(EvalReportFromJson("{}"), FormatError);

  // Histogram of the wrong length.
  EXPECT_THROW(
      EvalReportFromJson(
          "{\"overall\": {\"n\": 1}, \"per_group\": {}, \"rr_histogram\": []}"),
      FormatError);
}

// ---- tables and charts ---------------------------------------------------------------

TEST(ReportTablesTest, EmitsTablesAndCharts) {
  NamedReport a{"tc-32", SampleReport()};
  NamedReport b{"tc-16", SampleReport()};
  b.report.overall.ccc_rr = 0.74;
  const auto files = ReportTables({a, b});

  ASSERT_TRUE(files.count("table1_models.csv"));
  ASSERT_TRUE(files.count("table2_metrics.csv"));
  ASSERT_TRUE(files.count("table3_per_range_mse.csv"));
  ASSERT_TRUE(files.count("rr_histogram.svg"));
  ASSERT_TRUE(files.count("per_range_mse.svg"));
  ASSERT_TRUE(files.count("per_gender_mse.svg"));

  const auto& t2 = files.at("table2_metrics.csv");
  std::vector<std::string> lines;
  {
    std::istringstream is(t2);
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
  }
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "model,ccc_rr,pearson_rr,mse_rr,f1_breath,f1_noise");
  EXPECT_EQ(lines[1].substr(0, 6), "tc-32,");
  EXPECT_NE(lines[1].find("0.87142314"), std::string::npos);
  EXPECT_EQ(lines[2].substr(0, 6), "tc-16,");
  EXPECT_NE(lines[2].find("0.74"), std::string::npos);

  // The absent above-25 cell renders as an empty field with a zero count.
  const auto& t3 = files.at("table3_per_range_mse.csv");
  EXPECT_NE(t3.find(",,0"), std::string::npos);

  const auto& svg = files.at("rr_histogram.svg");
  EXPECT_EQ(svg.substr(0, 4), "<svg");
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  size_t rects = 0;
  for (size_t p = svg.find("<rect"); p != std::string::npos;
       p = svg.find("<rect", p + 1))
    ++rects;
  EXPECT_GE(rects, 21u);  // background plus one bar per bin
}

TEST(ReportTablesTest, QuotesCsvSpecialCharacters) {
  NamedReport named{"model,with\"comma", SampleReport()};
  const auto files = ReportTables({named});
  EXPECT_NE(files.at("table2_metrics.csv").find("\"model,with\"\"comma\""),
            std::string::npos);
}

TEST(ReportTablesTest, GenderChartFallsBackToNote) {
  NamedReport named{"solo", SampleReport()};
  named.report.per_group.clear();
  const auto files = ReportTables({named});
  EXPECT_FALSE(files.count("per_gender_mse.svg"));
  ASSERT_TRUE(files.count("per_gender_mse.txt"));
  EXPECT_NE(files.at("per_gender_mse.txt").find("omitted"), std::string::npos);
}

TEST(ReportTablesTest, RejectsEmptyInput) {
  EXPECT_THROW(ReportTables({}), ParameterError);
}

}  // namespace
}  // namespace respr
