// src/manifest.cc

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

#include "respr/manifest.h"

#include <fstream>

#include <json.hpp>

#include "respr/common.h"

namespace respr {

using nlohmann::json;

std::string ClassifyBreath(double rr_bpm) {
  if (rr_bpm < 5.0) return "no_breathing";
  if (rr_bpm <= 30.0) return "normal";
  return "heavy";
}

int BreathClassIndex(const std::string& name) {
  if (name == "no_breathing") return 0;
  if (name == "normal") return 1;
  if (name == "heavy") return 2;
  throw FormatError("unknown breath class '" + name + "'");
}

int NoiseClassIndex(const std::string& name) {
  if (name == "noiseless") return 0;
  if (name == "noisy") return 1;
  throw FormatError("unknown noise label '" + name + "'");
}

std::string SegmentLabelToJsonLine(const SegmentLabel& r) {
  json j;
  j["id"] = r.id;
  j["path"] = r.path;
  j["duration_s"] = r.duration_s;
  j["rr_bpm"] = r.rr_bpm;
  j["rc"] = r.rc;
  j["breath_class"] = r.breath_class;
  j["noise_label"] = r.noise_label;
  j["stage"] = r.stage;
  j["environment"] = r.environment;
  j["subject_id"] = r.subject_id;
  j["gender"] = r.gender;
  j["split"] = r.split;
  if (r.parent_id) j["parent_id"] = *r.parent_id;
  if (r.snr_db) j["snr_db"] = *r.snr_db;
  return j.dump();
}

SegmentLabel SegmentLabelFromJsonLine(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad manifest line: ") + e.what());
  }
  SegmentLabel r;
  try {
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.duration_s = j.at("duration_s").get<double>();
    r.rr_bpm = j.at("rr_bpm").get<double>();
    r.rc = j.at("rc").get<int>();
    r.breath_class = j.at("breath_class").get<std::string>();
    r.noise_label = j.at("noise_label").get<std::string>();
    r.stage = j.at("stage").get<int>();
    r.environment = j.at("environment").get<std::string>();
    r.subject_id = j.at("subject_id").get<std::string>();
    r.gender = j.at("gender").get<std::string>();
    r.split = j.at("split").get<std::string>();
    if (j.contains("parent_id")) r.parent_id = j["parent_id"].get<std::string>();
    if (j.contains("snr_db")) r.snr_db = j["snr_db"].get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest row missing field: ") + e.what());
  }
  return r;
}

std::vector<SegmentLabel> ReadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest: " + path);
  std::vector<SegmentLabel> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(SegmentLabelFromJsonLine(line));
  }
  return rows;
}

void WriteManifest(const std::string& path,
                   const std::vector<SegmentLabel>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write manifest: " + path);
  for (const auto& r : rows) out << SegmentLabelToJsonLine(r) << "\n";
  if (!out) throw Error("short write on manifest: " + path);
}

}  // namespace respr
