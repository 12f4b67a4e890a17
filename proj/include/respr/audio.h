// respr/audio.h

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

#ifndef RESPR_AUDIO_H_
#define RESPR_AUDIO_H_

#include <cstdint>
#include <string>
#include <vector>

namespace respr {

// All downstream processing assumes this rate; the 7500 Hz mel cutoff needs
// a Nyquist of at least that.
constexpr int kCanonicalSampleRateHz = 16000;

// A mono audio clip. Samples are amplitudes in [-1, 1].
struct AudioSegment {
  std::vector<float> samples;
  int sample_rate_hz = kCanonicalSampleRateHz;
  std::string source_id;
  double offset_s = 0.0;   // position within the source recording
  double duration_s = 0.0; // always samples.size() / sample_rate_hz

  void SetDurationFromSamples() {
    duration_s = static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// Reads a RIFF/WAVE file. Accepts PCM 16-bit and IEEE float 32-bit, 1 or 2
// channels. Stereo is downmixed by channel averaging; 16-bit samples are
// scaled by 1/32768. Throws FormatError on malformed input and
// UnsupportedError on any other codec.
AudioSegment ReadWav(const std::string& path);

// Writes mono 16-bit PCM little-endian. Samples are scaled by 32768 and
// clamped to the int16 range, so ReadWav(WriteWav(x)) round-trips material
// already on the 16-bit grid exactly.
void WriteWav(const std::string& path, const AudioSegment& seg);

// Quantizes samples in place to the 16-bit PCM grid (the same mapping
// WriteWav applies), so in-memory audio matches its on-disk form.
void QuantizePcm16(AudioSegment* seg);

// Windowed-sinc resampling to target_hz (>= 8000). Identity (bit-exact copy)
// when the rate already matches. Output duration stays within one sample
// period of the input duration.
AudioSegment Resample(const AudioSegment& seg, int target_hz);

// Cuts a recording into consecutive non-overlapping segments with lengths
// drawn uniformly from [min_s, max_s]. Once the remainder is at most max_s
// it becomes the final segment if it is at least min_s long and is discarded
// otherwise. A recording shorter than min_s yields an empty list.
std::vector<AudioSegment> SegmentRecording(const AudioSegment& seg,
                                           double min_s, double max_s,
                                           uint64_t rng_seed);

}  // namespace respr

#endif  // RESPR_AUDIO_H_
