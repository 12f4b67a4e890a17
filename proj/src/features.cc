// src/features.cc

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

#include "respr/features.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "respr/common.h"

namespace respr {

double MelScale(double f_hz) {
  if (f_hz < 0.0)
    throw ParameterError("mel scale input must be >= 0, got " +
                         std::to_string(f_hz));
  return 2595.0 * std::log10(1.0 + f_hz / 700.0);
}

double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

namespace internal {

void Fft(std::vector<double>* re_p, std::vector<double>* im_p) {
  std::vector<double>& re = *re_p;
  std::vector<double>& im = *im_p;
  const size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw ParameterError("FFT size must be a power of two, got " +
                         std::to_string(n));
  // Bit reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t j = 0; j < len / 2; ++j) {
        const size_t a = i + j, b = i + j + len / 2;
        const double xr = re[b] * cr - im[b] * ci;
        const double xi = re[b] * ci + im[b] * cr;
        re[b] = re[a] - xr;
        im[b] = im[a] - xi;
        re[a] += xr;
        im[a] += xi;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

}  // namespace internal

MelFilterbank BuildFilterbank(int n_mels, int n_fft, int sr_hz, double f_low,
                              double f_high) {
  if (n_mels < 1) throw ParameterError("n_mels must be >= 1");
  if (n_fft <= 0 || (n_fft & (n_fft - 1)) != 0)
    throw ParameterError("n_fft must be a power of two");
  if (f_high > sr_hz / 2.0)
    throw ParameterError("filterbank upper cutoff " + std::to_string(f_high) +
                         " above Nyquist " + std::to_string(sr_hz / 2.0));
  if (f_low < 0.0 || f_low >= f_high)
    throw ParameterError("invalid filterbank cutoffs");

  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.n_fft = n_fft;
  fb.sample_rate_hz = sr_hz;
  fb.f_low_hz = f_low;
  fb.f_high_hz = f_high;
  const int n_bins = n_fft / 2 + 1;
  fb.weights.assign(static_cast<size_t>(n_mels) * n_bins, 0.0);

  // n_mels + 2 edge points, equally spaced in mel.
  const double mel_lo = MelScale(f_low);
  const double mel_hi = MelScale(f_high);
  std::vector<double> edges_hz(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1);
    edges_hz[i] = MelToHz(mel);
  }

  const double bin_hz = static_cast<double>(sr_hz) / n_fft;
  for (int k = 0; k < n_mels; ++k) {
    const double left = edges_hz[k], center = edges_hz[k + 1],
                 right = edges_hz[k + 2];
    for (int b = 0; b < n_bins; ++b) {
      const double f = b * bin_hz;
      double w = 0.0;
      if (f > left && f < center) {
        w = (f - left) / (center - left);
      } else if (f == center) {
        w = 1.0;
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb.weights[static_cast<size_t>(k) * n_bins + b] = w;
    }
  }
  return fb;
}

FeatureMatrix ExtractMfb(const AudioSegment& seg, double frame_len_s,
                         double hop_s) {
  if (seg.sample_rate_hz != kCanonicalSampleRateHz)
    throw ParameterError("feature extraction expects " +
                         std::to_string(kCanonicalSampleRateHz) + " Hz, got " +
                         std::to_string(seg.sample_rate_hz));
  const int frame_n = static_cast<int>(std::llround(frame_len_s * seg.sample_rate_hz));
  const int hop_n = static_cast<int>(std::llround(hop_s * seg.sample_rate_hz));
  const int64_t n = static_cast<int64_t>(seg.samples.size());
  if (frame_n <= 0 || hop_n <= 0 || frame_n > kNfft)
    throw ParameterError("invalid frame/hop configuration");
  if (n < frame_n)
    throw ParameterError("segment shorter than one frame (" +
                         std::to_string(n) + " < " + std::to_string(frame_n) +
                         " samples): empty features");

  static const MelFilterbank fb = BuildFilterbank(
      kNumMels, kNfft, kCanonicalSampleRateHz, kMelLowHz, kMelHighHz);
  const int n_bins = kNfft / 2 + 1;

  // Sparse per-filter support keeps the per-frame cost near the number of
  // nonzero weights instead of n_mels * n_bins.
  static const auto support = [&] {
    std::vector<std::pair<int, int>> s(kNumMels, {0, 0});
    for (int k = 0; k < kNumMels; ++k) {
      int first = -1, last = -1;
      for (int b = 0; b < kNfft / 2 + 1; ++b) {
        if (fb.At(k, b) > 0.0) {
          if (first < 0) first = b;
          last = b;
        }
      }
      s[k] = {first < 0 ? 0 : first, first < 0 ? -1 : last};
    }
    return s;
  }();

  const int T = static_cast<int>((n - frame_n) / hop_n) + 1;

  // DC removal over the whole segment.
  double mean = 0.0;
  for (int64_t i = 0; i < n; ++i) mean += seg.samples[i];
  mean /= static_cast<double>(n);

  std::vector<double> window(frame_n);
  for (int i = 0; i < frame_n; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / frame_n);

  FeatureMatrix out;
  out.rows = T;
  out.n_mels = kNumMels;
  out.frame_hop_s = hop_s;
  out.frame_len_s = frame_len_s;
  out.sample_rate_hz = seg.sample_rate_hz;
  out.frames.resize(static_cast<size_t>(T) * kNumMels);

  std::vector<double> re(kNfft), im(kNfft), power(n_bins);
  for (int t = 0; t < T; ++t) {
    const int64_t start = static_cast<int64_t>(t) * hop_n;
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    for (int i = 0; i < frame_n; ++i)
      re[i] = (seg.samples[start + i] - mean) * window[i];
    internal::Fft(&re, &im);
    for (int b = 0; b < n_bins; ++b) power[b] = re[b] * re[b] + im[b] * im[b];
    for (int k = 0; k < kNumMels; ++k) {
      double e = 0.0;
      for (int b = support[k].first; b <= support[k].second; ++b)
        e += power[b] * fb.At(k, b);
      out.frames[static_cast<size_t>(t) * kNumMels + k] =
          std::log(std::max(e, kEnergyFloor));
    }
  }
  return out;
}

namespace {

constexpr char kCacheMagic[4] = {'R', 'M', 'F', 'B'};
constexpr uint32_t kCacheVersion = 1;

template <typename T>
void PutRaw(std::string* out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out->append(buf, sizeof(T));
}

template <typename T>
T GetRaw(const std::vector<uint8_t>& b, size_t* pos, const std::string& path) {
  if (*pos + sizeof(T) > b.size())
    throw CorruptionError("truncated feature cache: " + path);
  T v;
  std::memcpy(&v, b.data() + *pos, sizeof(T));
  *pos += sizeof(T);
  return v;
}

}  // namespace

void WriteFeatureCache(const std::string& path, const std::string& segment_id,
                       const FeatureMatrix& f) {
  std::string out;
  out.append(kCacheMagic, 4);
  PutRaw<uint32_t>(&out, kCacheVersion);
  PutRaw<uint32_t>(&out, static_cast<uint32_t>(segment_id.size()));
  out.append(segment_id);
  PutRaw<uint32_t>(&out, static_cast<uint32_t>(f.rows));
  PutRaw<uint32_t>(&out, static_cast<uint32_t>(f.n_mels));
  PutRaw<double>(&out, f.frame_hop_s);
  PutRaw<double>(&out, f.frame_len_s);
  PutRaw<uint32_t>(&out, static_cast<uint32_t>(f.sample_rate_hz));
  for (double v : f.frames) PutRaw<float>(&out, static_cast<float>(v));
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write feature cache: " + path);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw Error("short write on feature cache: " + path);
}

std::pair<std::string, FeatureMatrix> ReadFeatureCache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open feature cache: " + path);
  std::vector<uint8_t> b((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  if (b.size() < 8 || std::memcmp(b.data(), kCacheMagic, 4) != 0)
    throw FormatError("bad feature cache magic: " + path);
  size_t pos = 4;
  const uint32_t version = GetRaw<uint32_t>(b, &pos, path);
  if (version != kCacheVersion)
    throw UnsupportedError("unsupported feature cache version " +
                           std::to_string(version) + ": " + path);
  const uint32_t id_len = GetRaw<uint32_t>(b, &pos, path);
  if (pos + id_len > b.size())
    throw CorruptionError("truncated feature cache id: " + path);
  std::string id(reinterpret_cast<const char*>(b.data() + pos), id_len);
  pos += id_len;
  FeatureMatrix f;
  f.rows = static_cast<int>(GetRaw<uint32_t>(b, &pos, path));
  f.n_mels = static_cast<int>(GetRaw<uint32_t>(b, &pos, path));
  f.frame_hop_s = GetRaw<double>(b, &pos, path);
  f.frame_len_s = GetRaw<double>(b, &pos, path);
  f.sample_rate_hz = static_cast<int>(GetRaw<uint32_t>(b, &pos, path));
  const size_t count = static_cast<size_t>(f.rows) * f.n_mels;
  f.frames.resize(count);
  for (size_t i = 0; i < count; ++i)
    f.frames[i] = GetRaw<float>(b, &pos, path);
  if (pos != b.size())
    throw CorruptionError("trailing bytes in feature cache: " + path);
  return {std::move(id), std::move(f)};
}

}  // namespace respr
