// respr/augment.h

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

#ifndef RESPR_AUGMENT_H_
#define RESPR_AUGMENT_H_

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "respr/audio.h"
#include "respr/manifest.h"

namespace respr {

// An SNR range in dB; draws are uniform over [low_db, high_db].
struct SnrBand {
  double low_db = 0.0;
  double high_db = 0.0;
};

// Augmented copies drawn below this SNR are relabeled "noisy".
constexpr double kNoisyLabelSnrDb = 20.0;

// Stationary-spectrum noise with slow level drift, the appliance-hum stand-in:
// white Gaussian noise through a one-pole low-pass (-6 dB/octave above
// 500 Hz), +/-3 dB amplitude modulation at 0.5 Hz, RMS normalized to 0.1.
AudioSegment GenPseudoStationaryNoise(double duration_s, int sr_hz,
                                      uint64_t rng_seed);

// Scales noise so that 10*log10(P_clean / P_noise) == snr_db over the full
// segment, adds it to clean, and clamps the sum to [-1, 1]. Noise longer than
// clean is cropped from its start. If clip_fraction is non-null it receives
// the fraction of clamped samples; above 1% a warning is logged.
// A zero-power clean input has no defined SNR and raises
// DegenerateInputError.
AudioSegment MixAtSnr(const AudioSegment& clean, const AudioSegment& noise,
                      double snr_db, double* clip_fraction = nullptr);

using AudioLoadFn = std::function<AudioSegment(const SegmentLabel&)>;
// Persists an augmented copy and returns the path recorded in the manifest
// (may be empty for in-memory corpora).
using AudioSaveFn =
    std::function<std::string(const SegmentLabel&, const AudioSegment&)>;

// Emits three augmented copies (one SNR draw per copy, one copy per band) of
// every indoor training segment; everything else passes through untouched.
// Copies inherit all breath labels, get id "<parent>-aug<band>", and are
// relabeled "noisy" when the drawn SNR is below 20 dB. Returns the input
// rows followed by the new copies. Bands must be ordered and non-overlapping.
std::vector<SegmentLabel> AugmentCorpus(const std::vector<SegmentLabel>& manifest,
                                        const std::array<SnrBand, 3>& bands,
                                        uint64_t rng_seed,
                                        const AudioLoadFn& load,
                                        const AudioSaveFn& save);

}  // namespace respr

#endif  // RESPR_AUGMENT_H_
