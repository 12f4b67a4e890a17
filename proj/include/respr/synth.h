// respr/synth.h

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
// Synthetic breath-audio corpus. Each segment is a quiet background plus a
// train of band-shaped noise bursts, one burst per breath cycle. The stored
// respiratory-rate label is computed from the bursts actually placed in the
// segment (rc / duration * 60), never from the requested target rate, so
// labels stay consistent with the rendered audio.

#ifndef RESPR_SYNTH_H_
#define RESPR_SYNTH_H_

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "respr/audio.h"
#include "respr/manifest.h"

namespace respr {

// Target description for one segment; realized labels may differ (see above).
struct BreathSpec {
  std::string id;
  double target_rr_bpm = 12.0;  // <= 0 renders background only
  int stage = 1;                // workout stage 1..4
  std::string environment = "indoor";   // indoor | outdoor
  std::string breath_route = "nasal";   // nasal | oral
  std::string subject_id;
  std::string gender = "female";
  std::string split = "train";
};

// Renders one segment at the canonical sample rate. The returned samples have
// been quantized through 16-bit PCM so in-memory audio matches what a wav
// round trip would produce. Target rates above 60 bpm are rejected.
std::pair<AudioSegment, SegmentLabel> SynthSegment(const BreathSpec& spec,
                                                   double duration_s,
                                                   uint64_t seed);

// Receives each rendered segment; returns the path to record in the label
// (empty string keeps the corpus in-memory).
using SegmentSink =
    std::function<std::string(const SegmentLabel&, const AudioSegment&)>;

// Renders a full corpus: per-subject baseline rates drawn from U[9.5, 15.5]
// bpm, workout stage multipliers {x1.0, x2.2, x1.9, x1.4}, 60% indoor
// segments, a small fraction of breath-hold (rate zero) segments, and
// subject-disjoint train/validation/evaluation splits of roughly 70/15/15.
// Requires n_subjects >= 3 so every split is non-empty.
std::vector<SegmentLabel> SynthCorpus(int n_subjects, int segments_per_subject,
                                      uint64_t seed, const SegmentSink& sink);

}  // namespace respr

#endif  // RESPR_SYNTH_H_
