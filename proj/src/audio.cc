// src/audio.cc

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

#include "respr/audio.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "respr/common.h"
#include "respr/rng.h"

namespace respr {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatIeeeFloat = 3;

uint32_t ReadU32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t ReadU16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void PutU32(std::string* out, uint32_t v) {
  out->push_back(static_cast<char>(v & 0xff));
  out->push_back(static_cast<char>((v >> 8) & 0xff));
  out->push_back(static_cast<char>((v >> 16) & 0xff));
  out->push_back(static_cast<char>((v >> 24) & 0xff));
}

void PutU16(std::string* out, uint16_t v) {
  out->push_back(static_cast<char>(v & 0xff));
  out->push_back(static_cast<char>((v >> 8) & 0xff));
}

int16_t FloatToPcm16(float x) {
  double v = std::lround(static_cast<double>(x) * 32768.0);
  v = std::min(32767.0, std::max(-32768.0, v));
  return static_cast<int16_t>(v);
}

}  // namespace

AudioSegment ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open wav file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file: " + path);
  }

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  size_t data_off = 0, data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    char id[5] = {0};
    std::memcpy(id, bytes.data() + pos, 4);
    uint32_t len = ReadU32(bytes.data() + pos + 4);
    size_t body = pos + 8;
    if (std::strncmp(id, "fmt ", 4) == 0) {
      if (body + 16 > bytes.size() || len < 16)
        throw FormatError("truncated fmt chunk: " + path);
      format = ReadU16(bytes.data() + body);
      channels = ReadU16(bytes.data() + body + 2);
      sample_rate = ReadU32(bytes.data() + body + 4);
      bits = ReadU16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::strncmp(id, "data", 4) == 0) {
      if (body + len > bytes.size())
        throw FormatError("truncated data chunk: " + path);
      data_off = body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data_off == 0)
    throw FormatError("missing fmt/data chunk: " + path);
  if (channels < 1 || channels > 2)
    throw UnsupportedError("unsupported channel count " +
                           std::to_string(channels) + ": " + path);
  if (sample_rate == 0) throw FormatError("zero sample rate: " + path);

  const bool pcm16 = (format == kFormatPcm && bits == 16);
  const bool f32 = (format == kFormatIeeeFloat && bits == 32);
  if (!pcm16 && !f32)
    throw UnsupportedError("unsupported codec (format " +
                           std::to_string(format) + ", " +
                           std::to_string(bits) + " bit): " + path);

  const size_t bytes_per_sample = pcm16 ? 2 : 4;
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t n_frames = data_len / frame_bytes;

  AudioSegment seg;
  seg.sample_rate_hz = static_cast<int>(sample_rate);
  seg.source_id = path;
  seg.samples.resize(n_frames);
  const uint8_t* d = bytes.data() + data_off;
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const uint8_t* p = d + i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        int16_t v = static_cast<int16_t>(p[0] | (p[1] << 8));
        acc += v / 32768.0;
      } else {
        float v;
        uint32_t u = ReadU32(p);
        std::memcpy(&v, &u, 4);
        acc += std::min(1.0f, std::max(-1.0f, v));
      }
    }
    seg.samples[i] = static_cast<float>(acc / channels);
  }
  seg.SetDurationFromSamples();
  return seg;
}

void WriteWav(const std::string& path, const AudioSegment& seg) {
  std::string out;
  const uint32_t n = static_cast<uint32_t>(seg.samples.size());
  const uint32_t data_len = n * 2;
  out.reserve(44 + data_len);
  out.append("RIFF");
  PutU32(&out, 36 + data_len);
  out.append("WAVE");
  out.append("fmt ");
  PutU32(&out, 16);
  PutU16(&out, kFormatPcm);
  PutU16(&out, 1);  // mono
  PutU32(&out, static_cast<uint32_t>(seg.sample_rate_hz));
  PutU32(&out, static_cast<uint32_t>(seg.sample_rate_hz) * 2);
  PutU16(&out, 2);
  PutU16(&out, 16);
  out.append("data");
  PutU32(&out, data_len);
  for (uint32_t i = 0; i < n; ++i) {
    PutU16(&out, static_cast<uint16_t>(FloatToPcm16(seg.samples[i])));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write wav file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("short write on wav file: " + path);
}

void QuantizePcm16(AudioSegment* seg) {
  for (float& s : seg->samples) {
    s = static_cast<float>(FloatToPcm16(s) / 32768.0);
  }
}

AudioSegment Resample(const AudioSegment& seg, int target_hz) {
  if (target_hz < 8000)
    throw ParameterError("resample target below 8000 Hz: " +
                         std::to_string(target_hz));
  if (target_hz == seg.sample_rate_hz) return seg;

  const int src = seg.sample_rate_hz;
  const int64_t n_in = static_cast<int64_t>(seg.samples.size());
  const int64_t n_out = std::llround(static_cast<double>(n_in) * target_hz / src);

  // Low-pass windowed sinc; cutoff at the narrower Nyquist. The window
  // half-width widens by 1/ratio when downsampling.
  const double ratio = std::min(1.0, static_cast<double>(target_hz) / src);
  const double half_width = 16.0 / ratio;

  AudioSegment out;
  out.sample_rate_hz = target_hz;
  out.source_id = seg.source_id;
  out.offset_s = seg.offset_s;
  out.samples.resize(static_cast<size_t>(n_out));
  for (int64_t m = 0; m < n_out; ++m) {
    const double t = static_cast<double>(m) * src / target_hz;
    const int64_t lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(t - half_width)));
    const int64_t hi = std::min<int64_t>(n_in - 1, static_cast<int64_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (int64_t nn = lo; nn <= hi; ++nn) {
      const double u = t - static_cast<double>(nn);
      double k;
      if (std::abs(u) < 1e-12) {
        k = ratio;
      } else {
        const double pru = M_PI * ratio * u;
        k = ratio * std::sin(pru) / pru;
      }
      // Hann window over [-half_width, half_width].
      const double w = 0.5 + 0.5 * std::cos(M_PI * u / half_width);
      acc += seg.samples[static_cast<size_t>(nn)] * k * w;
    }
    out.samples[static_cast<size_t>(m)] =
        static_cast<float>(std::min(1.0, std::max(-1.0, acc)));
  }
  out.SetDurationFromSamples();
  return out;
}

std::vector<AudioSegment> SegmentRecording(const AudioSegment& seg,
                                           double min_s, double max_s,
                                           uint64_t rng_seed) {
  if (min_s <= 0.0 || max_s < min_s)
    throw ParameterError("invalid segment length bounds [" +
                         std::to_string(min_s) + ", " + std::to_string(max_s) +
                         "]");
  const int sr = seg.sample_rate_hz;
  const int64_t min_n = std::llround(min_s * sr);
  const int64_t max_n = std::llround(max_s * sr);
  const int64_t total = static_cast<int64_t>(seg.samples.size());

  Rng rng(rng_seed);
  std::vector<AudioSegment> out;
  int64_t pos = 0;
  while (true) {
    const int64_t rem = total - pos;
    if (rem < min_n) break;  // tail discarded
    int64_t len = (rem <= max_n) ? rem : rng.UniformInt(min_n, max_n);
    AudioSegment piece;
    piece.sample_rate_hz = sr;
    piece.source_id = seg.source_id;
    piece.offset_s = seg.offset_s + static_cast<double>(pos) / sr;
    piece.samples.assign(seg.samples.begin() + pos,
                         seg.samples.begin() + pos + len);
    piece.SetDurationFromSamples();
    out.push_back(std::move(piece));
    pos += len;
    if (rem <= max_n) break;
  }
  return out;
}

}  // namespace respr
