// src/synth.cc

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

#include "respr/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "respr/common.h"
#include "respr/rng.h"

namespace respr {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Burst shaping. A breath burst occupies kBurstDuty of the cycle, capped at
// kBurstMaxS so slow rates do not smear into each other.
constexpr double kBurstDuty = 0.4;
constexpr double kBurstMaxS = 1.5;
constexpr double kOnsetJitter = 0.10;  // +-10% cycle-length jitter

// Band edges in Hz for the two breath routes.
constexpr double kNasalLowHz = 200.0, kNasalHighHz = 800.0;
constexpr double kOralLowHz = 500.0, kOralHighHz = 6000.0;

// RMS targets. Stage gains make exercised breathing louder.
constexpr double kNasalRms = 0.08;
constexpr double kOralRms = 0.12;
constexpr double kStageGain[4] = {1.0, 1.6, 1.4, 1.2};
constexpr double kIndoorFloorRms = 0.002;
constexpr double kOutdoorFloorRms = 0.006;

// Second-order section, direct form I. Coefficients follow the standard
// RBJ cookbook with Q = 1/sqrt(2).
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  static Biquad LowPass(double fc_hz, double sr_hz) {
    return FromCookbook(fc_hz, sr_hz, /*highpass=*/false);
  }
  static Biquad HighPass(double fc_hz, double sr_hz) {
    return FromCookbook(fc_hz, sr_hz, /*highpass=*/true);
  }

  double Step(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }

 private:
  static Biquad FromCookbook(double fc_hz, double sr_hz, bool highpass) {
    if (fc_hz <= 0.0 || fc_hz >= sr_hz / 2.0)
      throw ParameterError("biquad cutoff out of range: " +
                           std::to_string(fc_hz) + " Hz at " +
                           std::to_string(sr_hz) + " Hz");
    const double w0 = 2.0 * kPi * fc_hz / sr_hz;
    const double q = 1.0 / std::sqrt(2.0);
    const double alpha = std::sin(w0) / (2.0 * q);
    const double c = std::cos(w0);
    const double a0 = 1.0 + alpha;
    Biquad f;
    if (highpass) {
      f.b0 = (1.0 + c) / 2.0 / a0;
      f.b1 = -(1.0 + c) / a0;
      f.b2 = (1.0 + c) / 2.0 / a0;
    } else {
      f.b0 = (1.0 - c) / 2.0 / a0;
      f.b1 = (1.0 - c) / a0;
      f.b2 = (1.0 - c) / 2.0 / a0;
    }
    f.a1 = -2.0 * c / a0;
    f.a2 = (1.0 - alpha) / a0;
    return f;
  }
};

double Rms(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc / static_cast<double>(v.size()));
}

// One band-shaped burst with a Hann envelope, normalized to target_rms.
std::vector<double> RenderBurst(int n, double low_hz, double high_hz,
                                double target_rms, int sr, Rng* rng) {
  std::vector<double> buf(n);
  for (int i = 0; i < n; ++i) buf[i] = rng->Gaussian();
  Biquad hp = Biquad::HighPass(low_hz, sr);
  Biquad lp = Biquad::LowPass(high_hz, sr);
  for (int i = 0; i < n; ++i) buf[i] = lp.Step(hp.Step(buf[i]));
  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    const double env = std::sin(kPi * u);
    buf[i] *= env * env;
  }
  const double r = Rms(buf);
  if (r > 0.0) {
    const double g = target_rms / r;
    for (double& x : buf) x *= g;
  }
  return buf;
}

struct BurstEvent {
  double onset_s = 0.0;
  double dur_s = 0.0;
};

// Onset grid for a target rate: first onset uniform within one cycle, then
// jittered cycle lengths. Only bursts that fit entirely inside the segment
// are placed, and exactly those define the stored breath count.
std::vector<BurstEvent> PlaceBursts(double rr_bpm, double duration_s,
                                    Rng* rng) {
  std::vector<BurstEvent> events;
  if (rr_bpm <= 0.0) return events;
  const double period = 60.0 / rr_bpm;
  const double burst_s = std::min(kBurstDuty * period, kBurstMaxS);
  double t = rng->Uniform(0.0, period);
  while (t + burst_s <= duration_s) {
    events.push_back({t, burst_s});
    t += period * (1.0 + rng->Uniform(-kOnsetJitter, kOnsetJitter));
  }
  return events;
}

}  // namespace

std::pair<AudioSegment, SegmentLabel> SynthSegment(const BreathSpec& spec,
                                                   double duration_s,
                                                   uint64_t seed) {
  if (duration_s <= 0.5)
    throw ParameterError("segment duration too short: " +
                         std::to_string(duration_s) + " s");
  if (spec.target_rr_bpm < 0.0 || spec.target_rr_bpm > 60.0)
    throw ParameterError("target respiratory rate outside [0, 60] bpm: " +
                         std::to_string(spec.target_rr_bpm));
  if (spec.stage < 1 || spec.stage > 4)
    throw ParameterError("stage must be 1..4, got " +
                         std::to_string(spec.stage));
  if (spec.environment != "indoor" && spec.environment != "outdoor")
    throw ParameterError("unknown environment '" + spec.environment + "'");
  if (spec.breath_route != "nasal" && spec.breath_route != "oral")
    throw ParameterError("unknown breath route '" + spec.breath_route + "'");

  const int sr = kCanonicalSampleRateHz;
  const int n = static_cast<int>(std::llround(duration_s * sr));
  Rng rng(seed);

  // Background floor: indoor is near-silent broadband; outdoor is a darker,
  // slightly louder ambience.
  std::vector<double> mix(n, 0.0);
  {
    const bool outdoor = spec.environment == "outdoor";
    const double floor_rms = outdoor ? kOutdoorFloorRms : kIndoorFloorRms;
    Biquad lp = Biquad::LowPass(outdoor ? 1500.0 : 4000.0, sr);
    std::vector<double> bg(n);
    for (int i = 0; i < n; ++i) bg[i] = lp.Step(rng.Gaussian());
    const double r = Rms(bg);
    const double g = r > 0.0 ? floor_rms / r : 0.0;
    for (int i = 0; i < n; ++i) mix[i] = bg[i] * g;
  }

  const auto events = PlaceBursts(spec.target_rr_bpm, duration_s, &rng);
  const bool oral = spec.breath_route == "oral";
  const double low_hz = oral ? kOralLowHz : kNasalLowHz;
  const double high_hz = oral ? kOralHighHz : kNasalHighHz;
  const double base_rms =
      (oral ? kOralRms : kNasalRms) * kStageGain[spec.stage - 1];
  int rendered = 0;
  for (const auto& ev : events) {
    const int e0 = static_cast<int>(std::llround(ev.onset_s * sr));
    const int en = static_cast<int>(std::llround(ev.dur_s * sr));
    if (en < 8 || e0 + en > n) continue;
    const double rms = base_rms * rng.Uniform(0.8, 1.2);
    const auto burst = RenderBurst(en, low_hz, high_hz, rms, sr, &rng);
    for (int i = 0; i < en; ++i) mix[e0 + i] += burst[i];
    ++rendered;
  }

  AudioSegment audio;
  audio.sample_rate_hz = sr;
  audio.samples.resize(n);
  for (int i = 0; i < n; ++i)
    audio.samples[i] = static_cast<float>(std::clamp(mix[i], -1.0, 1.0));
  QuantizePcm16(&audio);
  audio.source_id = spec.id;
  audio.SetDurationFromSamples();

  SegmentLabel label;
  label.id = spec.id;
  // RR derives from the realized (sample-quantized) duration and the bursts
  // actually written, so the label is exactly consistent with the audio.
  label.duration_s = audio.duration_s;
  label.rc = rendered;
  label.rr_bpm = static_cast<double>(label.rc) / label.duration_s * 60.0;
  label.breath_class = ClassifyBreath(label.rr_bpm);
  label.noise_label = "noiseless";
  label.stage = spec.stage;
  label.environment = spec.environment;
  label.subject_id = spec.subject_id;
  label.gender = spec.gender;
  label.split = spec.split;
  return {std::move(audio), std::move(label)};
}

std::vector<SegmentLabel> SynthCorpus(int n_subjects, int segments_per_subject,
                                      uint64_t seed, const SegmentSink& sink) {
  if (n_subjects < 3)
    throw ParameterError(
        "corpus needs at least 3 subjects for disjoint splits, got " +
        std::to_string(n_subjects));
  if (segments_per_subject < 1)
    throw ParameterError("segments_per_subject must be positive");
  if (!sink) throw ParameterError("segment sink is required");

  // Subject-disjoint splits, roughly 70/15/15 with at least one subject each.
  const int n_val = std::max(1, static_cast<int>(0.15 * n_subjects));
  const int n_eval = std::max(1, static_cast<int>(0.15 * n_subjects));
  const int n_train = n_subjects - n_val - n_eval;

  constexpr double kStageMult[4] = {1.0, 2.2, 1.9, 1.4};
  constexpr double kOralProb[4] = {0.2, 0.8, 0.7, 0.4};
  constexpr double kIndoorProb = 0.6;
  constexpr double kBreathHoldProb = 0.04;

  std::vector<SegmentLabel> rows;
  rows.reserve(static_cast<size_t>(n_subjects) * segments_per_subject);
  for (int s = 0; s < n_subjects; ++s) {
    char sid[16];
    std::snprintf(sid, sizeof(sid), "s%03d", s);
    const std::string subject_id(sid);
    const std::string split = s < n_train ? "train"
                              : s < n_train + n_val ? "validation"
                                                    : "evaluation";
    const std::string gender = (s % 2 == 0) ? "female" : "male";
    Rng subject_rng(Rng::Derive(seed, subject_id));
    const double baseline_rr = subject_rng.Uniform(9.5, 15.5);

    for (int g = 0; g < segments_per_subject; ++g) {
      const uint64_t seg_seed =
          Rng::Derive(Rng::Derive(seed, subject_id), static_cast<uint64_t>(g),
                      /*b=*/1);
      Rng draw(Rng::Derive(seg_seed, "draw"));

      BreathSpec spec;
      char gid[32];
      std::snprintf(gid, sizeof(gid), "%s-g%03d", sid, g);
      spec.id = gid;
      spec.subject_id = subject_id;
      spec.gender = gender;
      spec.split = split;
      spec.stage = 1 + static_cast<int>(draw.UniformInt(0, 3));
      spec.environment = draw.Uniform() < kIndoorProb ? "indoor" : "outdoor";
      spec.breath_route =
          draw.Uniform() < kOralProb[spec.stage - 1] ? "oral" : "nasal";
      if (draw.Uniform() < kBreathHoldProb) {
        spec.target_rr_bpm = 0.0;
      } else {
        spec.target_rr_bpm = baseline_rr * kStageMult[spec.stage - 1] *
                             (1.0 + draw.Uniform(-0.08, 0.08));
      }
      const double duration_s = draw.Uniform(8.0, 12.0);

      auto [audio, label] =
          SynthSegment(spec, duration_s, Rng::Derive(seg_seed, "render"));
      label.path = sink(label, audio);
      rows.push_back(std::move(label));
    }
  }
  return rows;
}

}  // namespace respr
