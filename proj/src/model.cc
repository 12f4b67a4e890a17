// src/model.cc

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

#include "respr/model.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "respr/common.h"
#include "respr/manifest.h"
#include "respr/rng.h"

namespace respr {

using nlohmann::json;

void ModelConfig::Validate() const {
  if (n_mels < 1) throw ParameterError("n_mels must be positive");
  if (n_lstm < 1) throw ParameterError("n_lstm must be positive");
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    throw ParameterError("conv_kernel must be odd and positive, got " +
                         std::to_string(conv_kernel));
  if (n_breath_classes < 2 || n_noise_classes < 2)
    throw ParameterError("classifier heads need at least 2 classes");
}

namespace {

// Rows of a Gaussian matrix orthonormalized by modified Gram-Schmidt.
std::vector<double> OrthogonalSquare(int n, Rng* rng) {
  std::vector<double> q(static_cast<size_t>(n) * n);
  for (auto& v : q) v = rng->Gaussian();
  for (int i = 0; i < n; ++i) {
    double* vi = q.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < i; ++j) {
      const double* vj = q.data() + static_cast<size_t>(j) * n;
      double dot = 0.0;
      for (int k = 0; k < n; ++k) dot += vi[k] * vj[k];
      for (int k = 0; k < n; ++k) vi[k] -= dot * vj[k];
    }
    double norm = 0.0;
    for (int k = 0; k < n; ++k) norm += vi[k] * vi[k];
    norm = std::sqrt(norm);
    if (norm < 1e-12)
      throw NumericError("degenerate draw during orthogonal init");
    for (int k = 0; k < n; ++k) vi[k] /= norm;
  }
  return q;
}

template <typename S>
TensorT<S> UniformFanIn(const Shape& shape, int fan_in, Rng* rng) {
  const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<S> v(static_cast<size_t>(shape.numel()));
  for (auto& x : v) x = static_cast<S>(rng->Uniform(-a, a));
  return TapeT<S>::Leaf(shape, std::move(v), true);
}

template <typename S>
TensorT<S> ZerosParam(const Shape& shape) {
  return TapeT<S>::Leaf(shape, std::vector<S>(shape.numel(), S(0)), true);
}

}  // namespace

template <typename S>
ModelParamsT<S> InitModelParams(const ModelConfig& config, uint64_t seed) {
  config.Validate();
  const int D = config.n_mels, H = config.n_lstm, K = config.conv_kernel;
  const int Eb = config.breath_embed_dim(), En = config.noise_embed_dim();
  Rng rng(seed);

  ModelParamsT<S> p;
  p.config = config;
  auto add = [&p](const std::string& name, TensorT<S> t) {
    p.names.push_back(name);
    p.tensors.push_back(std::move(t));
  };

  if (config.time_conv) {
    add("conv_w", UniformFanIn<S>(Shape::Cube(K, D, D), K * D, &rng));
    add("conv_b", ZerosParam<S>(Shape::Vec(D)));
  }
  add("lstm_wx", UniformFanIn<S>(Shape::Mat(D, 4 * H), D, &rng));
  {
    // Gate blocks ordered i, f, g, o along the 4H axis; each recurrent block
    // starts orthogonal.
    std::vector<S> wh(static_cast<size_t>(H) * 4 * H);
    for (int gate = 0; gate < 4; ++gate) {
      const auto q = OrthogonalSquare(H, &rng);
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < H; ++c)
          wh[static_cast<size_t>(r) * 4 * H + gate * H + c] =
              static_cast<S>(q[static_cast<size_t>(r) * H + c]);
    }
    add("lstm_wh", TapeT<S>::Leaf(Shape::Mat(H, 4 * H), std::move(wh), true));
  }
  {
    std::vector<S> b(static_cast<size_t>(4) * H, S(0));
    for (int c = H; c < 2 * H; ++c) b[c] = S(1);  // forget gate opens first
    add("lstm_b", TapeT<S>::Leaf(Shape::Vec(4 * H), std::move(b), true));
  }
  add("emb_breath_w", UniformFanIn<S>(Shape::Mat(H, Eb), H, &rng));
  add("emb_breath_b", ZerosParam<S>(Shape::Vec(Eb)));
  add("emb_noise_w", UniformFanIn<S>(Shape::Mat(H, En), H, &rng));
  add("emb_noise_b", ZerosParam<S>(Shape::Vec(En)));
  add("head_reg_w", UniformFanIn<S>(Shape::Mat(Eb, 2), Eb, &rng));
  add("head_reg_b", ZerosParam<S>(Shape::Vec(2)));
  add("head_breath_w",
      UniformFanIn<S>(Shape::Mat(Eb, config.n_breath_classes), Eb, &rng));
  add("head_breath_b", ZerosParam<S>(Shape::Vec(config.n_breath_classes)));
  add("head_noise_w",
      UniformFanIn<S>(Shape::Mat(En, config.n_noise_classes), En, &rng));
  add("head_noise_b", ZerosParam<S>(Shape::Vec(config.n_noise_classes)));
  return p;
}

template ModelParamsT<float> InitModelParams<float>(const ModelConfig&,
                                                    uint64_t);
template ModelParamsT<double> InitModelParams<double>(const ModelConfig&,
                                                      uint64_t);

template <typename S>
ForwardOutT<S> ModelForward(TapeT<S>* tape, const ModelParamsT<S>& params,
                            const TensorT<S>& x, const TensorT<S>& mask) {
  const ModelConfig& cfg = params.config;
  if (x.shape().rank != 3)
    throw ShapeError("model input must be (batch, time, mels), got " +
                     x.shape().Str());
  const int64_t B = x.shape().d[0], T = x.shape().d[1], D = x.shape().d[2];
  if (D != cfg.n_mels)
    throw ShapeError("model expects " + std::to_string(cfg.n_mels) +
                     " mel channels, got " + x.shape().Str());
  if (mask.shape().rank != 2 || mask.shape().d[0] != B || mask.shape().d[1] != T)
    throw ShapeError("mask shape " + mask.shape().Str() +
                     " does not match input " + x.shape().Str());

  TapeT<S>& tp = *tape;
  const int H = cfg.n_lstm;

  // Zero the padded frames up front; the convolution window would otherwise
  // read whatever the caller left beyond each sequence's end.
  auto mcol = tp.Reshape(mask, Shape::Mat(B * T, 1));
  TensorT<S> seq = tp.Reshape(
      tp.Mul(tp.Reshape(x, Shape::Mat(B * T, D)), mcol), Shape::Cube(B, T, D));
  if (cfg.time_conv)
    seq = tp.Relu(
        tp.Conv1dTime(seq, params.Get("conv_w"), params.Get("conv_b")));

  // Input projections and the bias for every frame in one product; the step
  // loop then only adds the recurrent term and runs the fused cell, which
  // keeps the tape short for thousand-frame batches.
  auto flat = tp.Reshape(seq, Shape::Mat(B * T, D));
  auto xw = tp.Reshape(
      tp.Add(tp.MatMul(flat, params.Get("lstm_wx")), params.Get("lstm_b")),
      Shape::Cube(B, T, 4 * H));

  const auto& wh = params.Get("lstm_wh");
  TensorT<S> h = TapeT<S>::Zeros(Shape::Mat(B, H));
  TensorT<S> c = TapeT<S>::Zeros(Shape::Mat(B, H));
  for (int64_t t = 0; t < T; ++t) {
    auto gates = tp.Add(tp.SliceTime(xw, t), tp.MatMul(h, wh));
    // The cell holds its state wherever the mask hits padding.
    auto m = tp.SliceCols(mask, t, t + 1);
    c = tp.LstmCellState(gates, c, m);
    h = tp.LstmCellOutput(gates, c, h, m);
  }

  auto breath_emb = tp.Tanh(tp.Add(tp.MatMul(h, params.Get("emb_breath_w")),
                                   params.Get("emb_breath_b")));
  auto noise_emb = tp.Tanh(tp.Add(tp.MatMul(h, params.Get("emb_noise_w")),
                                  params.Get("emb_noise_b")));
  auto reg = tp.Add(tp.MatMul(breath_emb, params.Get("head_reg_w")),
                    params.Get("head_reg_b"));

  ForwardOutT<S> out;
  out.rr = tp.SliceCols(reg, 0, 1);
  out.rc = tp.SliceCols(reg, 1, 2);
  out.breath_logits =
      tp.Add(tp.MatMul(breath_emb, params.Get("head_breath_w")),
             params.Get("head_breath_b"));
  out.noise_logits = tp.Add(tp.MatMul(noise_emb, params.Get("head_noise_w")),
                            params.Get("head_noise_b"));
  return out;
}

template ForwardOutT<float> ModelForward<float>(TapeT<float>*,
                                                const ModelParamsT<float>&,
                                                const TensorT<float>&,
                                                const TensorT<float>&);
template ForwardOutT<double> ModelForward<double>(TapeT<double>*,
                                                  const ModelParamsT<double>&,
                                                  const TensorT<double>&,
                                                  const TensorT<double>&);

// ---- checkpoint ------------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'B', 'R', 'R', 'M'};
constexpr uint32_t kModelVersion = 1;

template <typename T>
void PutRaw(std::string* out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out->append(buf, sizeof(T));
}

template <typename T>
T GetRaw(const std::vector<uint8_t>& b, size_t* pos, const std::string& path) {
  if (*pos + sizeof(T) > b.size())
    throw CorruptionError("truncated model file: " + path);
  T v;
  std::memcpy(&v, b.data() + *pos, sizeof(T));
  *pos += sizeof(T);
  return v;
}

json ConfigToJson(const ModelConfig& c) {
  json j;
  j["n_mels"] = c.n_mels;
  j["n_lstm"] = c.n_lstm;
  j["time_conv"] = c.time_conv;
  j["conv_kernel"] = c.conv_kernel;
  j["n_breath_classes"] = c.n_breath_classes;
  j["n_noise_classes"] = c.n_noise_classes;
  return j;
}

ModelConfig ConfigFromJson(const json& j) {
  ModelConfig c;
  c.n_mels = j.at("n_mels").get<int>();
  c.n_lstm = j.at("n_lstm").get<int>();
  c.time_conv = j.at("time_conv").get<bool>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.n_breath_classes = j.at("n_breath_classes").get<int>();
  c.n_noise_classes = j.at("n_noise_classes").get<int>();
  return c;
}

}  // namespace

void SaveModel(const std::string& path, const ModelBundle& bundle) {
  const auto& p = bundle.params;
  if (p.names.size() != p.tensors.size())
    throw ParameterError("malformed parameter table");

  json header;
  header["config"] = ConfigToJson(p.config);
  header["norm"]["mean"] = bundle.norm.mean;
  header["norm"]["std"] = bundle.norm.std;
  json tens = json::array();
  for (size_t i = 0; i < p.names.size(); ++i) {
    json t;
    t["name"] = p.names[i];
    const Shape& s = p.tensors[i].shape();
    t["shape"] = std::vector<int64_t>(s.d.begin(), s.d.begin() + s.rank);
    tens.push_back(t);
  }
  header["tensors"] = tens;
  header["metadata"] = bundle.metadata;
  const std::string hs = header.dump();

  std::string out;
  out.append(kModelMagic, 4);
  PutRaw<uint32_t>(&out, kModelVersion);
  PutRaw<uint32_t>(&out, static_cast<uint32_t>(hs.size()));
  out.append(hs);
  for (const auto& t : p.tensors)
    for (float v : t.val()) PutRaw<float>(&out, v);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write model file: " + path);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw Error("short write on model file: " + path);
}

ModelBundle LoadModel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file: " + path);
  std::vector<uint8_t> b((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  if (b.size() < 12 || std::memcmp(b.data(), kModelMagic, 4) != 0)
    throw FormatError("bad model file magic: " + path);
  size_t pos = 4;
  const uint32_t version = GetRaw<uint32_t>(b, &pos, path);
  if (version != kModelVersion)
    throw UnsupportedError("unsupported model file version " +
                           std::to_string(version) + ": " + path);
  const uint32_t header_len = GetRaw<uint32_t>(b, &pos, path);
  if (pos + header_len > b.size())
    throw CorruptionError("truncated model header: " + path);
  json header;
  try {
    header = json::parse(b.begin() + pos, b.begin() + pos + header_len);
  } catch (const json::exception& e) {
    throw FormatError("unparseable model header: " + path + ": " + e.what());
  }
  pos += header_len;

  ModelBundle bundle;
  try {
    bundle.params.config = ConfigFromJson(header.at("config"));
    bundle.norm.mean = header.at("norm").at("mean").get<std::vector<float>>();
    bundle.norm.std = header.at("norm").at("std").get<std::vector<float>>();
    if (header.contains("metadata"))
      bundle.metadata =
          header.at("metadata").get<std::map<std::string, std::string>>();
    for (const auto& t : header.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const auto dims = t.at("shape").get<std::vector<int64_t>>();
      if (dims.empty() || dims.size() > 3)
        throw FormatError("bad tensor rank in model header: " + path);
      Shape s;
      s.rank = static_cast<int>(dims.size());
      for (size_t i = 0; i < dims.size(); ++i) s.d[i] = dims[i];
      std::vector<float> vals(static_cast<size_t>(s.numel()));
      for (auto& v : vals) v = GetRaw<float>(b, &pos, path);
      bundle.params.names.push_back(name);
      bundle.params.tensors.push_back(Tape::Leaf(s, std::move(vals), true));
    }
  } catch (const json::exception& e) {
    throw FormatError("bad model header field: " + path + ": " + e.what());
  }
  if (pos != b.size())
    throw CorruptionError("trailing bytes in model file: " + path);
  bundle.params.config.Validate();
  return bundle;
}

// ---- inference ---------------------------------------------------------------

SegmentPrediction Predict(const ModelBundle& bundle, const FeatureMatrix& f) {
  const ModelConfig& cfg = bundle.params.config;
  if (f.n_mels != cfg.n_mels)
    throw ShapeError("feature dimension " + std::to_string(f.n_mels) +
                     " does not match model (" + std::to_string(cfg.n_mels) +
                     ")");
  if (f.rows < 1) throw DegenerateInputError("empty feature matrix");
  if (bundle.norm.mean.size() != static_cast<size_t>(cfg.n_mels) ||
      bundle.norm.std.size() != static_cast<size_t>(cfg.n_mels))
    throw FormatError("normalization statistics do not match feature size");

  const int64_t T = f.rows, D = cfg.n_mels;
  std::vector<float> x(static_cast<size_t>(T) * D);
  for (int64_t t = 0; t < T; ++t)
    for (int64_t m = 0; m < D; ++m) {
      const float sd = std::max(bundle.norm.std[m], 1e-6f);
      x[t * D + m] =
          (static_cast<float>(f.At(t, m)) - bundle.norm.mean[m]) / sd;
    }

  Tape tape;
  tape.SetGradEnabled(false);
  auto xin = Tape::Constant(Shape::Cube(1, T, D), std::move(x));
  auto mask = Tape::Constant(Shape::Mat(1, T),
                             std::vector<float>(static_cast<size_t>(T), 1.0f));
  auto out = ModelForward(&tape, bundle.params, xin, mask);
  auto bp = tape.SoftmaxRows(out.breath_logits);
  auto np = tape.SoftmaxRows(out.noise_logits);

  SegmentPrediction pred;
  pred.rr_bpm = static_cast<double>(out.rr.val()[0]) * kRrNormDivisor;
  pred.rc = static_cast<double>(out.rc.val()[0]) * kRcNormDivisor;
  pred.breath_probs.assign(bp.val().begin(), bp.val().end());
  pred.noise_probs.assign(np.val().begin(), np.val().end());

  static const char* kBreathNames[] = {"no_breathing", "normal", "heavy"};
  static const char* kNoiseNames[] = {"noiseless", "noisy"};
  const int bi = static_cast<int>(
      std::max_element(pred.breath_probs.begin(), pred.breath_probs.end()) -
      pred.breath_probs.begin());
  const int ni = static_cast<int>(
      std::max_element(pred.noise_probs.begin(), pred.noise_probs.end()) -
      pred.noise_probs.begin());
  pred.breath_class = bi < 3 ? kBreathNames[bi] : std::to_string(bi);
  pred.noise_label = ni < 2 ? kNoiseNames[ni] : std::to_string(ni);
  return pred;
}

}  // namespace respr
