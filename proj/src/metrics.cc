// src/metrics.cc

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
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "respr/common.h"
#include "respr/losses.h"

namespace respr {

using nlohmann::json;

namespace {

std::string Fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// RFC-4180 field quoting.
std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

double MacroF1(const std::vector<int>& truth, const std::vector<int>& pred,
               int n_classes) {
  if (truth.size() != pred.size() || truth.empty())
    throw ParameterError("macro F1 needs equal-length non-empty inputs");
  if (n_classes < 2) throw ParameterError("macro F1 needs >= 2 classes");
  std::vector<int64_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = pred[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
      throw ParameterError("class index out of range in macro F1");
    if (t == p) {
      ++tp[t];
    } else {
      ++fn[t];
      ++fp[p];
    }
  }
  double sum = 0.0;
  int supported = 0;
  for (int k = 0; k < n_classes; ++k) {
    if (tp[k] + fn[k] == 0) continue;  // class absent from ground truth
    ++supported;
    const double prec = tp[k] + fp[k] > 0
                            ? static_cast<double>(tp[k]) /
                                  static_cast<double>(tp[k] + fp[k])
                            : 0.0;
    const double rec =
        static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fn[k]);
    sum += prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  if (supported == 0)
    throw DegenerateInputError("no class has ground-truth support");
  return 100.0 * sum / static_cast<double>(supported);
}

MetricSet ComputeMetricSet(const SplitPredictions& preds,
                           const std::vector<size_t>& rows) {
  if (rows.empty()) throw ParameterError("empty metric subset");
  MetricSet m;
  m.n = static_cast<int>(rows.size());

  std::vector<double> rr_p, rr_t, rrn_p, rrn_t;
  std::vector<int> b_p, b_t, n_p, n_t;
  std::vector<double> range_sq[3];
  for (size_t i : rows) {
    if (i >= preds.rr_pred.size())
      throw ParameterError("metric subset row out of range");
    rr_p.push_back(preds.rr_pred[i]);
    rr_t.push_back(preds.rr_true[i]);
    rrn_p.push_back(preds.rr_pred[i] / kRrNormDivisor);
    rrn_t.push_back(preds.rr_true[i] / kRrNormDivisor);
    b_p.push_back(preds.breath_pred[i]);
    b_t.push_back(preds.breath_true[i]);
    n_p.push_back(preds.noise_pred[i]);
    n_t.push_back(preds.noise_true[i]);
    const double sq = (rrn_p.back() - rrn_t.back()) *
                      (rrn_p.back() - rrn_t.back());
    const double rr = preds.rr_true[i];
    if (rr < kRangeLowEdgeBpm)
      range_sq[0].push_back(sq);
    else if (rr <= kRangeHighEdgeBpm)
      range_sq[1].push_back(sq);
    else
      range_sq[2].push_back(sq);
  }

  if (rows.size() >= 2) {
    try {
      m.ccc_rr = Ccc(rr_p, rr_t);
      m.pearson_rr = PearsonR(rr_p, rr_t);
    } catch (const DegenerateInputError&) {
      m.ccc_degenerate = true;
    }
  } else {
    m.ccc_degenerate = true;
  }
  m.mse_rr = Mse(rrn_p, rrn_t);
  m.f1_breath = MacroF1(b_t, b_p, 3);
  m.f1_noise = MacroF1(n_t, n_p, 2);

  RangeCell* cells[3] = {&m.below_15, &m.from_15_to_25, &m.above_25};
  for (int r = 0; r < 3; ++r) {
    if (range_sq[r].empty()) continue;  // cell marked absent, not zero
    cells[r]->present = true;
    cells[r]->n = static_cast<int>(range_sq[r].size());
    double acc = 0.0;
    for (double v : range_sq[r]) acc += v;
    cells[r]->mse = acc / static_cast<double>(range_sq[r].size());
  }
  return m;
}

EvalReport Evaluate(const ModelBundle& bundle,
                    const std::vector<TrainSample>& split, int batch_size) {
  const SplitPredictions preds =
      PredictSplit(bundle.params, bundle.norm, split, batch_size);
  EvalReport report;
  std::vector<size_t> all(preds.rr_true.size());
  std::iota(all.begin(), all.end(), 0);
  report.overall = ComputeMetricSet(preds, all);

  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < preds.gender.size(); ++i)
    if (!preds.gender[i].empty()) groups[preds.gender[i]].push_back(i);
  for (const auto& [name, rows] : groups)
    report.per_group[name] = ComputeMetricSet(preds, rows);

  for (double rr : preds.rr_true) {
    int bin = static_cast<int>(rr / 3.0);  // 20 bins across [0, 60]
    bin = std::clamp(bin, 0, 19);
    ++report.rr_histogram[bin];
  }
  return report;
}

// ---- JSON round trip -----------------------------------------------------------

namespace {

json RangeToJson(const RangeCell& c) {
  if (!c.present) return nullptr;
  json j;
  j["n"] = c.n;
  j["mse"] = c.mse;
  return j;
}

RangeCell RangeFromJson(const json& j) {
  RangeCell c;
  if (j.is_null()) return c;
  c.present = true;
  c.n = j.at("n").get<int>();
  c.mse = j.at("mse").get<double>();
  return c;
}

json MetricSetToJson(const MetricSet& m) {
  json j;
  j["n"] = m.n;
  j["ccc_rr"] = m.ccc_rr;
  j["pearson_rr"] = m.pearson_rr;
  j["mse_rr"] = m.mse_rr;
  j["ccc_degenerate"] = m.ccc_degenerate;
  j["f1_breath"] = m.f1_breath;
  j["f1_noise"] = m.f1_noise;
  j["per_range_mse"]["below_15"] = RangeToJson(m.below_15);
  j["per_range_mse"]["15_to_25"] = RangeToJson(m.from_15_to_25);
  j["per_range_mse"]["above_25"] = RangeToJson(m.above_25);
  return j;
}

MetricSet MetricSetFromJson(const json& j) {
  MetricSet m;
  m.n = j.at("n").get<int>();
  m.ccc_rr = j.at("ccc_rr").get<double>();
  m.pearson_rr = j.at("pearson_rr").get<double>();
  m.mse_rr = j.at("mse_rr").get<double>();
  m.ccc_degenerate = j.at("ccc_degenerate").get<bool>();
  m.f1_breath = j.at("f1_breath").get<double>();
  m.f1_noise = j.at("f1_noise").get<double>();
  const auto& r = j.at("per_range_mse");
  m.below_15 = RangeFromJson(r.at("below_15"));
  m.from_15_to_25 = RangeFromJson(r.at("15_to_25"));
  m.above_25 = RangeFromJson(r.at("above_25"));
  return m;
}

}  // namespace

std::string EvalReportToJson(const EvalReport& report) {
  json j;
  j["overall"] = MetricSetToJson(report.overall);
  j["per_group"] = json::object();
  for (const auto& [name, m] : report.per_group)
    j["per_group"][name] = MetricSetToJson(m);
  j["rr_histogram"] = report.rr_histogram;
  return j.dump(2) + "\n";
}

EvalReport EvalReportFromJson(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("unparseable evaluation report: ") +
                      e.what());
  }
  EvalReport report;
  try {
    report.overall = MetricSetFromJson(j.at("overall"));
    for (const auto& [name, m] : j.at("per_group").items())
      report.per_group[name] = MetricSetFromJson(m);
    const auto hist = j.at("rr_histogram").get<std::vector<int>>();
    if (hist.size() != report.rr_histogram.size())
      throw FormatError("rr_histogram must have 20 bins");
    std::copy(hist.begin(), hist.end(), report.rr_histogram.begin());
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad evaluation report field: ") + e.what());
  }
  return report;
}

// ---- tables and charts -----------------------------------------------------------

namespace {

constexpr const char* kBarColors[] = {"#4878a8", "#d08048", "#58a868",
                                      "#b05868", "#8868a8", "#a8a848"};

std::string SvgHeader(int w, int h, const std::string& title) {
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
       std::to_string(w) + "\" height=\"" + std::to_string(h) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(w / 2) +
       "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"14\">" +
       title + "</text>\n";
  return s;
}

std::string HistogramSvg(const std::array<int, 20>& counts,
                         const std::string& title) {
  const int w = 640, h = 360, left = 50, bottom = 40, top = 40;
  const int plot_w = w - left - 20, plot_h = h - top - bottom;
  int peak = 1;
  for (int c : counts) peak = std::max(peak, c);
  std::string s = SvgHeader(w, h, title);
  const double bw = static_cast<double>(plot_w) / counts.size();
  for (size_t i = 0; i < counts.size(); ++i) {
    const double bh = plot_h * static_cast<double>(counts[i]) / peak;
    s += "<rect x=\"" + Fmt(left + i * bw + 1) + "\" y=\"" +
         Fmt(top + plot_h - bh) + "\" width=\"" + Fmt(bw - 2) +
         "\" height=\"" + Fmt(bh) + "\" fill=\"#4878a8\"/>\n";
  }
  for (int rr = 0; rr <= 60; rr += 15) {
    const double x = left + plot_w * rr / 60.0;
    s += "<text x=\"" + Fmt(x) + "\" y=\"" + std::to_string(h - 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"11\">" +
         std::to_string(rr) + "</text>\n";
  }
  s += "<text x=\"" + std::to_string(left + plot_w / 2) + "\" y=\"" +
       std::to_string(h - 4) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"11\">respiratory rate (bpm)</text>\n";
  s += "<text x=\"14\" y=\"" + std::to_string(top + plot_h / 2) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
       "transform=\"rotate(-90 14 " +
       std::to_string(top + plot_h / 2) + ")\">segments</text>\n";
  s += "</svg>\n";
  return s;
}

// Bars grouped by category, one colored series per report.
std::string GroupedBarsSvg(const std::vector<std::string>& categories,
                           const std::vector<std::string>& series,
                           const std::vector<std::vector<double>>& values,
                           const std::string& title) {
  const int w = 640, h = 360, left = 60, bottom = 60, top = 40;
  const int plot_w = w - left - 20, plot_h = h - top - bottom;
  double peak = 1e-12;
  for (const auto& row : values)
    for (double v : row) peak = std::max(peak, v);
  std::string s = SvgHeader(w, h, title);
  const double gw = static_cast<double>(plot_w) / categories.size();
  const double bw = gw / (series.size() + 1);
  for (size_t c = 0; c < categories.size(); ++c) {
    for (size_t r = 0; r < series.size(); ++r) {
      const double v = values[r][c];
      if (v < 0) continue;  // absent cell
      const double bh = plot_h * v / peak;
      s += "<rect x=\"" + Fmt(left + c * gw + (r + 0.5) * bw) + "\" y=\"" +
           Fmt(top + plot_h - bh) + "\" width=\"" + Fmt(bw * 0.9) +
           "\" height=\"" + Fmt(bh) + "\" fill=\"" +
           kBarColors[r % 6] + "\"/>\n";
    }
    s += "<text x=\"" + Fmt(left + (c + 0.5) * gw) + "\" y=\"" +
         std::to_string(h - bottom + 16) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"11\">" +
         categories[c] + "</text>\n";
  }
  for (size_t r = 0; r < series.size(); ++r) {
    const int y = h - bottom + 34 + static_cast<int>(r) * 14;
    s += "<rect x=\"" + std::to_string(left) + "\" y=\"" +
         std::to_string(y - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
         kBarColors[r % 6] + "\"/>\n";
    s += "<text x=\"" + std::to_string(left + 14) + "\" y=\"" +
         std::to_string(y) +
         "\" font-family=\"sans-serif\" font-size=\"11\">" + series[r] +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace

std::map<std::string, std::string> ReportTables(
    const std::vector<NamedReport>& reports) {
  if (reports.empty()) throw ParameterError("report_tables needs >= 1 report");
  std::map<std::string, std::string> files;

  // Neuron-comparison shape: one row per model, CCC and F1.
  std::string t1 = "model,n,ccc_rr,f1_breath,f1_noise\n";
  for (const auto& r : reports)
    t1 += CsvField(r.name) + "," + std::to_string(r.report.overall.n) + "," +
          Fmt(r.report.overall.ccc_rr) + "," + Fmt(r.report.overall.f1_breath) +
          "," + Fmt(r.report.overall.f1_noise) + "\n";
  files["table1_models.csv"] = t1;

  // Full metric shape: CCC, Pearson, MSE, F1 per model.
  std::string t2 = "model,ccc_rr,pearson_rr,mse_rr,f1_breath,f1_noise\n";
  for (const auto& r : reports)
    t2 += CsvField(r.name) + "," + Fmt(r.report.overall.ccc_rr) + "," +
          Fmt(r.report.overall.pearson_rr) + "," +
          Fmt(r.report.overall.mse_rr) + "," +
          Fmt(r.report.overall.f1_breath) + "," +
          Fmt(r.report.overall.f1_noise) + "\n";
  files["table2_metrics.csv"] = t2;

  // Per-range MSE shape; absent cells stay empty.
  std::string t3 =
      "model,mse_below_15,n_below_15,mse_15_to_25,n_15_to_25,"
      "mse_above_25,n_above_25\n";
  for (const auto& r : reports) {
    const RangeCell* cells[3] = {&r.report.overall.below_15,
                                 &r.report.overall.from_15_to_25,
                                 &r.report.overall.above_25};
    t3 += CsvField(r.name);
    for (const RangeCell* c : cells) {
      if (c->present)
        t3 += "," + Fmt(c->mse) + "," + std::to_string(c->n);
      else
        t3 += ",,0";
    }
    t3 += "\n";
  }
  files["table3_per_range_mse.csv"] = t3;

  // RR distribution of the first report's evaluation set.
  files["rr_histogram.svg"] =
      HistogramSvg(reports.front().report.rr_histogram,
                   "Distribution of respiratory rates (" +
                       reports.front().name + ")");

  {
    const std::vector<std::string> cats = {"below 15", "15 to 25", "above 25"};
    std::vector<std::string> series;
    std::vector<std::vector<double>> vals;
    for (const auto& r : reports) {
      series.push_back(r.name);
      const RangeCell* cells[3] = {&r.report.overall.below_15,
                                   &r.report.overall.from_15_to_25,
                                   &r.report.overall.above_25};
      std::vector<double> row;
      for (const RangeCell* c : cells) row.push_back(c->present ? c->mse : -1);
      vals.push_back(row);
    }
    files["per_range_mse.svg"] =
        GroupedBarsSvg(cats, series, vals, "MSE by respiratory-rate range");
  }

  bool any_gender = false;
  for (const auto& r : reports) any_gender |= !r.report.per_group.empty();
  if (any_gender) {
    // One bar group per gender, MSE per report.
    std::vector<std::string> cats;
    for (const auto& r : reports)
      for (const auto& [g, m] : r.report.per_group)
        if (std::find(cats.begin(), cats.end(), g) == cats.end())
          cats.push_back(g);
    std::sort(cats.begin(), cats.end());
    std::vector<std::string> series;
    std::vector<std::vector<double>> vals;
    for (const auto& r : reports) {
      series.push_back(r.name);
      std::vector<double> row;
      for (const auto& g : cats) {
        auto it = r.report.per_group.find(g);
        row.push_back(it == r.report.per_group.end() ? -1 : it->second.mse_rr);
      }
      vals.push_back(row);
    }
    files["per_gender_mse.svg"] =
        GroupedBarsSvg(cats, series, vals, "MSE by gender");
  } else {
    files["per_gender_mse.txt"] =
        "per-gender chart omitted: no gender metadata in any report\n";
  }
  return files;
}

}  // namespace respr
