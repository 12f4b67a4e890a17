// respr/features.h

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

#ifndef RESPR_FEATURES_H_
#define RESPR_FEATURES_H_

#include <string>
#include <utility>
#include <vector>

#include "respr/audio.h"

namespace respr {

constexpr int kNumMels = 40;
constexpr int kNfft = 512;
constexpr double kMelLowHz = 0.0;
constexpr double kMelHighHz = 7500.0;
constexpr double kFrameLenS = 0.025;
constexpr double kFrameHopS = 0.010;
constexpr double kEnergyFloor = 1e-10;

// HTK mel scale: 2595 * log10(1 + f/700). Strictly increasing; f >= 0.
double MelScale(double f_hz);
double MelToHz(double mel);

// Triangular filters equally spaced on the mel scale. Row k covers the
// triangle over mel edge points (k, k+1, k+2), sampled at FFT bin centers.
struct MelFilterbank {
  int n_mels = 0;
  int n_fft = 0;
  int sample_rate_hz = 0;
  double f_low_hz = 0.0;
  double f_high_hz = 0.0;
  std::vector<double> weights;  // n_mels x (n_fft/2 + 1), row-major

  double At(int mel, int bin) const { return weights[mel * (n_fft / 2 + 1) + bin]; }
};

MelFilterbank BuildFilterbank(int n_mels, int n_fft, int sr_hz, double f_low,
                              double f_high);

// T x n_mels log mel-filterbank energies.
struct FeatureMatrix {
  std::vector<double> frames;  // row-major, rows x n_mels
  int rows = 0;
  int n_mels = kNumMels;
  double frame_hop_s = kFrameHopS;
  double frame_len_s = kFrameLenS;
  int sample_rate_hz = kCanonicalSampleRateHz;

  double At(int t, int m) const { return frames[t * n_mels + m]; }
};

// Per frame: DC-removed segment, Hann window, zero-padded 512-point FFT,
// power spectrum, filterbank multiply, log with a 1e-10 energy floor.
// The segment must be at the canonical 16 kHz rate and at least one frame
// long. T == floor((N - frame_len) / hop) + 1.
FeatureMatrix ExtractMfb(const AudioSegment& seg, double frame_len_s = kFrameLenS,
                         double hop_s = kFrameHopS);

// Feature cache record: fixed header (segment id, dimensions, timing) plus a
// row-major little-endian f32 payload.
void WriteFeatureCache(const std::string& path, const std::string& segment_id,
                       const FeatureMatrix& features);
std::pair<std::string, FeatureMatrix> ReadFeatureCache(const std::string& path);

namespace internal {
// In-place iterative radix-2 FFT on interleaved complex data (re, im).
// n must be a power of two.
void Fft(std::vector<double>* re, std::vector<double>* im);
}  // namespace internal

}  // namespace respr

#endif  // RESPR_FEATURES_H_
