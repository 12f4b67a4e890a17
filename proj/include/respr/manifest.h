// respr/manifest.h

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

#ifndef RESPR_MANIFEST_H_
#define RESPR_MANIFEST_H_

#include <optional>
#include <string>
#include <vector>

namespace respr {

// Labels and provenance for one audio segment; one JSONL row per segment.
struct SegmentLabel {
  std::string id;
  std::string path;          // wav location, may be empty for in-memory corpora
  double duration_s = 0.0;
  double rr_bpm = 0.0;       // breaths per minute, rc / duration * 60
  int rc = 0;                // breath cycles fully inside the segment
  std::string breath_class;  // no_breathing | normal | heavy
  std::string noise_label;   // noiseless | noisy
  int stage = 1;             // workout stage 1..4
  std::string environment;   // indoor | outdoor
  std::string subject_id;
  std::string gender;        // female | male
  std::string split;         // train | validation | evaluation
  std::optional<std::string> parent_id;  // set on augmented copies
  std::optional<double> snr_db;          // drawn SNR for augmented copies
};

// Breath class from a respiratory rate in breaths per minute:
// below 5 -> "no_breathing", 5..30 inclusive -> "normal", above 30 -> "heavy".
std::string ClassifyBreath(double rr_bpm);

// Class indices used by the model heads. Unknown names raise FormatError.
// Breath: no_breathing=0, normal=1, heavy=2. Noise: noiseless=0, noisy=1.
int BreathClassIndex(const std::string& name);
int NoiseClassIndex(const std::string& name);

std::vector<SegmentLabel> ReadManifest(const std::string& path);
void WriteManifest(const std::string& path,
                   const std::vector<SegmentLabel>& rows);

std::string SegmentLabelToJsonLine(const SegmentLabel& row);
SegmentLabel SegmentLabelFromJsonLine(const std::string& line);

}  // namespace respr

#endif  // RESPR_MANIFEST_H_
