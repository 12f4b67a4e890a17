// src/augment.cc

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

#include "respr/augment.h"

#include <cmath>

#include "respr/common.h"
#include "respr/rng.h"

namespace respr {

namespace {

double Rms(const std::vector<float>& x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i)
    acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace

AudioSegment GenPseudoStationaryNoise(double duration_s, int sr_hz,
                                      uint64_t rng_seed) {
  if (duration_s <= 0.0) throw ParameterError("noise duration must be > 0");
  if (sr_hz <= 0) throw ParameterError("noise sample rate must be > 0");
  const int64_t n = std::llround(duration_s * sr_hz);
  Rng rng(rng_seed);

  AudioSegment out;
  out.sample_rate_hz = sr_hz;
  out.source_id = "pseudo-stationary-noise";
  out.samples.resize(static_cast<size_t>(n));

  // One-pole low-pass at 500 Hz gives the -6 dB/octave shape.
  const double pole = std::exp(-2.0 * M_PI * 500.0 / sr_hz);
  const double phase0 = rng.Uniform(0.0, 2.0 * M_PI);
  double state = 0.0;
  std::vector<double> raw(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    state = pole * state + (1.0 - pole) * rng.Gaussian();
    const double t = static_cast<double>(i) / sr_hz;
    const double gain_db = 3.0 * std::sin(2.0 * M_PI * 0.5 * t + phase0);
    raw[static_cast<size_t>(i)] = state * std::pow(10.0, gain_db / 20.0);
  }

  double acc = 0.0;
  for (double v : raw) acc += v * v;
  const double rms = std::sqrt(acc / static_cast<double>(n));
  const double scale = 0.1 / rms;
  for (int64_t i = 0; i < n; ++i)
    out.samples[static_cast<size_t>(i)] =
        static_cast<float>(raw[static_cast<size_t>(i)] * scale);
  out.SetDurationFromSamples();
  return out;
}

AudioSegment MixAtSnr(const AudioSegment& clean, const AudioSegment& noise,
                      double snr_db, double* clip_fraction) {
  if (clean.sample_rate_hz != noise.sample_rate_hz)
    throw ParameterError("mix requires equal sample rates");
  if (noise.samples.size() < clean.samples.size())
    throw ParameterError("noise shorter than clean signal");
  const size_t n = clean.samples.size();

  const double clean_rms = Rms(clean.samples, n);
  if (clean_rms == 0.0)
    throw DegenerateInputError("zero-power clean input: SNR undefined");
  const double noise_rms = Rms(noise.samples, n);
  if (noise_rms == 0.0)
    throw DegenerateInputError("zero-power noise input");

  // 10*log10(Pc / (s^2 * Pn)) == snr_db  =>  s = rms_c / (rms_n * 10^(snr/20))
  const double scale = clean_rms / (noise_rms * std::pow(10.0, snr_db / 20.0));

  AudioSegment out = clean;
  size_t clipped = 0;
  for (size_t i = 0; i < n; ++i) {
    double v = static_cast<double>(clean.samples[i]) +
               scale * static_cast<double>(noise.samples[i]);
    if (v > 1.0) {
      v = 1.0;
      ++clipped;
    } else if (v < -1.0) {
      v = -1.0;
      ++clipped;
    }
    out.samples[i] = static_cast<float>(v);
  }
  const double frac = static_cast<double>(clipped) / static_cast<double>(n);
  if (clip_fraction != nullptr) *clip_fraction = frac;
  if (frac > 0.01)
    RESPR_WARN << "mix_at_snr clipped " << frac * 100.0 << "% of samples ("
               << clean.source_id << ", " << snr_db << " dB)";
  return out;
}

std::vector<SegmentLabel> AugmentCorpus(const std::vector<SegmentLabel>& manifest,
                                        const std::array<SnrBand, 3>& bands,
                                        uint64_t rng_seed,
                                        const AudioLoadFn& load,
                                        const AudioSaveFn& save) {
  for (size_t b = 0; b < bands.size(); ++b) {
    if (bands[b].low_db >= bands[b].high_db)
      throw ParameterError("SNR band " + std::to_string(b) + " is misordered");
    if (b > 0 && bands[b].low_db < bands[b - 1].high_db)
      throw ParameterError("SNR bands overlap or are out of order");
  }
  bool any_indoor = false;
  for (const auto& r : manifest)
    if (r.environment == "indoor") any_indoor = true;
  if (!any_indoor)
    throw ParameterError("augmentation requires indoor segments in the manifest");

  std::vector<SegmentLabel> out = manifest;
  size_t n_copies = 0;
  for (const auto& r : manifest) {
    if (r.environment != "indoor" || r.split != "train") continue;
    const AudioSegment clean = load(r);
    for (size_t b = 0; b < bands.size(); ++b) {
      const uint64_t seed =
          Rng::Derive(Rng::Derive(rng_seed, r.id), static_cast<uint64_t>(b));
      Rng rng(seed);
      const double snr = rng.Uniform(bands[b].low_db, bands[b].high_db);
      const AudioSegment noise = GenPseudoStationaryNoise(
          clean.duration_s, clean.sample_rate_hz, Rng::Derive(seed, "noise"));
      AudioSegment mixed = MixAtSnr(clean, noise, snr);
      mixed.source_id = r.id + "-aug" + std::to_string(b);

      SegmentLabel copy = r;
      copy.id = r.id + "-aug" + std::to_string(b);
      copy.parent_id = r.id;
      copy.snr_db = snr;
      if (snr < kNoisyLabelSnrDb) copy.noise_label = "noisy";
      copy.path = save(copy, mixed);
      out.push_back(std::move(copy));
      ++n_copies;
    }
  }
  if (n_copies == 0)
    RESPR_WARN << "augment_corpus produced no copies (no indoor training segments)";
  return out;
}

}  // namespace respr
