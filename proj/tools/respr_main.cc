// tools/respr_main.cc

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
// respr: one binary for the whole pipeline.
//   synth      render the synthetic breath corpus (wavs + manifest)
//   featurize  extract mel-filterbank caches for a manifest
//   augment    add noise-mixed copies of indoor training segments
//   train      fit an LSTM / TC-LSTM estimator
//   evaluate   metrics for a checkpoint on a manifest split
//   predict    single-wav inference
//   report     tables + charts from evaluation reports
// JSON results go to stdout; human-readable progress goes to stderr.
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "respr/audio.h"
#include "respr/augment.h"
#include "respr/common.h"
#include "respr/features.h"
#include "respr/losses.h"
#include "respr/manifest.h"
#include "respr/metrics.h"
#include "respr/model.h"
#include "respr/synth.h"
#include "respr/trainer.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace respr;

namespace {

// ---- declarative run configuration -----------------------------------------

struct RunConfig {
  std::string run_id = "run";
  uint64_t seed = 7;
  std::string out_root;  // empty -> $RESPR_OUT_ROOT or "."

  std::string architecture = "tc-lstm";  // tc-lstm | lstm
  int neurons = 32;
  int conv_kernel = 3;

  TrainConfig train;
  MtlWeights mtl;

  int synth_subjects = 20;
  int synth_segments = 150;
  std::string augment_bands = "10:20,20:30,30:40";
};

void CheckKnownKeys(const json& j, const std::string& scope,
                    const std::vector<std::string>& known) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ParameterError("unknown config key '" + scope + key + "'");
  }
}

template <typename T>
void MaybeGet(const json& j, const char* key, T* out) {
  if (j.contains(key)) *out = j.at(key).get<T>();
}

RunConfig LoadConfig(const std::string& path) {
  RunConfig c;
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw ParameterError("--config file not found: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParameterError("unparseable config " + path + ": " + e.what());
  }
  CheckKnownKeys(j, "", {"run_id", "seed", "out_root", "model", "train", "mtl",
                         "synth", "augment"});
  MaybeGet(j, "run_id", &c.run_id);
  MaybeGet(j, "seed", &c.seed);
  MaybeGet(j, "out_root", &c.out_root);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    CheckKnownKeys(m, "model.", {"architecture", "neurons", "conv_kernel"});
    MaybeGet(m, "architecture", &c.architecture);
    MaybeGet(m, "neurons", &c.neurons);
    MaybeGet(m, "conv_kernel", &c.conv_kernel);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    CheckKnownKeys(t, "train.",
                   {"batch_size", "learning_rate", "adam_beta1", "adam_beta2",
                    "adam_eps", "max_epochs", "patience", "grad_clip_norm"});
    MaybeGet(t, "batch_size", &c.train.batch_size);
    MaybeGet(t, "learning_rate", &c.train.learning_rate);
    MaybeGet(t, "adam_beta1", &c.train.adam_beta1);
    MaybeGet(t, "adam_beta2", &c.train.adam_beta2);
    MaybeGet(t, "adam_eps", &c.train.adam_eps);
    MaybeGet(t, "max_epochs", &c.train.max_epochs);
    MaybeGet(t, "patience", &c.train.patience);
    MaybeGet(t, "grad_clip_norm", &c.train.grad_clip_norm);
  }
  if (j.contains("mtl")) {
    const auto& m = j.at("mtl");
    CheckKnownKeys(m, "mtl.", {"alpha", "beta", "gamma", "kappa", "gamma_focal",
                               "dwa_temperature"});
    MaybeGet(m, "alpha", &c.mtl.alpha);
    MaybeGet(m, "beta", &c.mtl.beta);
    MaybeGet(m, "gamma", &c.mtl.gamma);
    MaybeGet(m, "kappa", &c.mtl.kappa);
    MaybeGet(m, "gamma_focal", &c.mtl.gamma_focal);
    MaybeGet(m, "dwa_temperature", &c.mtl.dwa_temperature);
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    CheckKnownKeys(s, "synth.", {"subjects", "segments_per_subject"});
    MaybeGet(s, "subjects", &c.synth_subjects);
    MaybeGet(s, "segments_per_subject", &c.synth_segments);
  }
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    CheckKnownKeys(a, "augment.", {"bands"});
    MaybeGet(a, "bands", &c.augment_bands);
  }
  return c;
}

json DumpConfig(const RunConfig& c) {
  json j;
  j["run_id"] = c.run_id;
  j["seed"] = c.seed;
  j["out_root"] = c.out_root;
  j["model"]["architecture"] = c.architecture;
  j["model"]["neurons"] = c.neurons;
  j["model"]["conv_kernel"] = c.conv_kernel;
  j["train"]["batch_size"] = c.train.batch_size;
  j["train"]["learning_rate"] = c.train.learning_rate;
  j["train"]["adam_beta1"] = c.train.adam_beta1;
  j["train"]["adam_beta2"] = c.train.adam_beta2;
  j["train"]["adam_eps"] = c.train.adam_eps;
  j["train"]["max_epochs"] = c.train.max_epochs;
  j["train"]["patience"] = c.train.patience;
  j["train"]["grad_clip_norm"] = c.train.grad_clip_norm;
  j["mtl"]["alpha"] = c.mtl.alpha;
  j["mtl"]["beta"] = c.mtl.beta;
  j["mtl"]["gamma"] = c.mtl.gamma;
  j["mtl"]["kappa"] = c.mtl.kappa;
  j["mtl"]["gamma_focal"] = c.mtl.gamma_focal;
  j["mtl"]["dwa_temperature"] = c.mtl.dwa_temperature;
  j["synth"]["subjects"] = c.synth_subjects;
  j["synth"]["segments_per_subject"] = c.synth_segments;
  j["augment"]["bands"] = c.augment_bands;
  return j;
}

std::string OutRoot(const RunConfig& c) {
  if (!c.out_root.empty()) return c.out_root;
  if (const char* env = std::getenv("RESPR_OUT_ROOT")) return env;
  return ".";
}

std::string DefaultOut(const RunConfig& c, const std::string& leaf) {
  return (fs::path(OutRoot(c)) / c.run_id / leaf).string();
}

ModelConfig ToModelConfig(const RunConfig& c) {
  if (c.architecture != "tc-lstm" && c.architecture != "lstm")
    throw ParameterError("model architecture must be tc-lstm or lstm, got '" +
                         c.architecture + "'");
  if (c.neurons != 16 && c.neurons != 32 && c.neurons != 64)
    throw ParameterError("--neurons must be one of {16, 32, 64}, got " +
                         std::to_string(c.neurons));
  ModelConfig m;
  m.n_mels = kNumMels;
  m.n_lstm = c.neurons;
  m.time_conv = c.architecture == "tc-lstm";
  m.conv_kernel = c.conv_kernel;
  return m;
}

std::array<SnrBand, 3> ParseBands(const std::string& text) {
  std::array<SnrBand, 3> bands;
  size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const size_t comma = text.find(',', pos);
    const std::string part = comma == std::string::npos
                                 ? text.substr(pos)
                                 : text.substr(pos, comma - pos);
    const size_t colon = part.find(':');
    if (colon == std::string::npos)
      throw ParameterError("--bands must look like lo:hi,lo:hi,lo:hi, got '" +
                           text + "'");
    try {
      bands[i].low_db = std::stod(part.substr(0, colon));
      bands[i].high_db = std::stod(part.substr(colon + 1));
    } catch (const std::exception&) {
      throw ParameterError("bad SNR band '" + part + "' in --bands");
    }
    if (comma == std::string::npos) {
      if (i != 2)
        throw ParameterError("--bands needs exactly 3 ranges, got '" + text +
                             "'");
      break;
    }
    pos = comma + 1;
  }
  return bands;
}

void RequireFile(const std::string& path, const char* flag) {
  if (path.empty())
    throw ParameterError(std::string(flag) + " is required");
  if (!fs::exists(path))
    throw ParameterError(std::string("file not found for ") + flag + ": " +
                         path);
}

void WriteTextFile(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? "."
                             : fs::path(path).parent_path().string());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path);
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw Error("short write on " + path);
}

AudioSegment LoadWavCanonical(const std::string& path) {
  AudioSegment seg = ReadWav(path);
  if (seg.sample_rate_hz != kCanonicalSampleRateHz)
    seg = Resample(seg, kCanonicalSampleRateHz);
  return seg;
}

// Feature source for train/evaluate: cache directory if given, else wav paths.
FeatureLoadFn MakeFeatureLoader(const std::string& features_dir) {
  if (features_dir.empty()) {
    return [](const SegmentLabel& row) {
      if (row.path.empty())
        throw ParameterError("segment '" + row.id +
                             "' has no wav path; run featurize and pass "
                             "--features");
      return ExtractMfb(LoadWavCanonical(row.path));
    };
  }
  return [features_dir](const SegmentLabel& row) {
    const std::string path =
        (fs::path(features_dir) / (row.id + ".mfb")).string();
    if (!fs::exists(path))
      throw ParameterError("feature cache missing for --features: " + path);
    auto [id, f] = ReadFeatureCache(path);
    if (id != row.id)
      throw FormatError("feature cache " + path + " holds segment '" + id +
                        "'");
    return f;
  };
}

// ---- subcommands ---------------------------------------------------------------

int CmdSynth(const RunConfig& cfg, const std::string& out) {
  const fs::path root = out.empty() ? DefaultOut(cfg, "corpus") : out;
  fs::create_directories(root / "wav");
  SegmentSink sink = [&root](const SegmentLabel& label,
                             const AudioSegment& audio) {
    const std::string path = (root / "wav" / (label.id + ".wav")).string();
    WriteWav(path, audio);
    return path;
  };
  const auto rows =
      SynthCorpus(cfg.synth_subjects, cfg.synth_segments, cfg.seed, sink);
  const std::string manifest = (root / "manifest.jsonl").string();
  WriteManifest(manifest, rows);
  json j;
  j["manifest"] = manifest;
  j["segments"] = rows.size();
  j["subjects"] = cfg.synth_subjects;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int CmdFeaturize(const RunConfig& cfg, const std::string& manifest_path,
                 const std::string& out) {
  RequireFile(manifest_path, "--manifest");
  const fs::path root = out.empty() ? DefaultOut(cfg, "features") : out;
  fs::create_directories(root);
  const auto rows = ReadManifest(manifest_path);
  for (const auto& row : rows) {
    RequireFile(row.path, "--manifest (wav path)");
    const FeatureMatrix f = ExtractMfb(LoadWavCanonical(row.path));
    WriteFeatureCache((root / (row.id + ".mfb")).string(), row.id, f);
  }
  json j;
  j["out"] = root.string();
  j["count"] = rows.size();
  std::cout << j.dump(2) << "\n";
  return 0;
}

int CmdAugment(const RunConfig& cfg, const std::string& manifest_path,
               const std::string& bands_text, const std::string& out) {
  RequireFile(manifest_path, "--manifest");
  const fs::path root = out.empty() ? DefaultOut(cfg, "augmented") : out;
  fs::create_directories(root / "wav");
  const auto bands = ParseBands(bands_text);
  const auto rows = ReadManifest(manifest_path);
  AudioLoadFn load = [](const SegmentLabel& row) {
    RequireFile(row.path, "--manifest (wav path)");
    return LoadWavCanonical(row.path);
  };
  AudioSaveFn save = [&root](const SegmentLabel& label,
                             const AudioSegment& audio) {
    const std::string path = (root / "wav" / (label.id + ".wav")).string();
    WriteWav(path, audio);
    return path;
  };
  const auto augmented = AugmentCorpus(rows, bands, cfg.seed, load, save);
  const std::string manifest = (root / "manifest.jsonl").string();
  WriteManifest(manifest, augmented);
  json j;
  j["manifest"] = manifest;
  j["segments"] = augmented.size();
  j["added"] = augmented.size() - rows.size();
  std::cout << j.dump(2) << "\n";
  return 0;
}

int CmdTrain(const RunConfig& cfg, const std::string& manifest_path,
             const std::string& features_dir, const std::string& out_ckpt,
             const std::string& out_log) {
  RequireFile(manifest_path, "--manifest");
  const ModelConfig mcfg = ToModelConfig(cfg);
  TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;
  tcfg.Validate();
  cfg.mtl.Validate();

  const auto rows = ReadManifest(manifest_path);
  const Dataset ds = BuildDataset(rows, MakeFeatureLoader(features_dir));
  const MtlWeights weights = ResolveClassWeights(cfg.mtl, ds);
  RESPR_LOG << "training " << cfg.architecture << " with " << cfg.neurons
            << " neurons on " << ds.train.size() << " segments ("
            << ds.validation.size() << " validation)";
  TrainResult result = Train(mcfg, ds, tcfg, weights);

  const std::string ckpt =
      out_ckpt.empty() ? DefaultOut(cfg, "model.bin") : out_ckpt;
  fs::create_directories(fs::path(ckpt).parent_path().empty()
                             ? "."
                             : fs::path(ckpt).parent_path().string());
  SaveModel(ckpt, result.best);
  const std::string log_path = out_log.empty() ? ckpt + ".log.csv" : out_log;
  WriteTextFile(log_path, result.log_csv);

  json j;
  j["checkpoint"] = ckpt;
  j["training_log"] = log_path;
  j["best_epoch"] = result.best_epoch;
  j["best_val_ccc_rr"] = result.best_val_ccc;
  j["epochs_run"] = result.epochs_run;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int CmdEvaluate(const RunConfig& cfg, const std::string& ckpt_path,
                const std::string& manifest_path, const std::string& split,
                const std::string& features_dir, const std::string& out) {
  RequireFile(ckpt_path, "--ckpt");
  RequireFile(manifest_path, "--manifest");
  if (split != "train" && split != "validation" && split != "evaluation")
    throw ParameterError(
        "--split must be train, validation, or evaluation; got '" + split +
        "'");
  const ModelBundle bundle = LoadModel(ckpt_path);
  const auto rows = ReadManifest(manifest_path);
  std::vector<SegmentLabel> subset;
  for (const auto& r : rows)
    if (r.split == split) subset.push_back(r);
  if (subset.empty())
    throw ParameterError("manifest has no '" + split + "' segments");
  const Dataset ds = BuildDataset(subset, MakeFeatureLoader(features_dir));
  const std::vector<TrainSample>& samples = split == "train" ? ds.train
                                            : split == "validation"
                                                ? ds.validation
                                                : ds.evaluation;
  const EvalReport report =
      Evaluate(bundle, samples, cfg.train.batch_size);
  const std::string text = EvalReportToJson(report);
  std::cout << text;
  if (!out.empty()) {
    fs::create_directories(out);
    WriteTextFile((fs::path(out) / (cfg.run_id + "-report.json")).string(),
                  text);
    for (const auto& [name, content] :
         ReportTables({{cfg.run_id, report}}))
      WriteTextFile((fs::path(out) / name).string(), content);
  }
  return 0;
}

int CmdPredict(const std::string& ckpt_path, const std::string& wav_path) {
  RequireFile(ckpt_path, "--ckpt");
  RequireFile(wav_path, "--wav");
  const ModelBundle bundle = LoadModel(ckpt_path);
  const SegmentPrediction pred =
      Predict(bundle, ExtractMfb(LoadWavCanonical(wav_path)));
  json j;
  j["rr_bpm"] = pred.rr_bpm;
  j["rc"] = pred.rc;
  j["breath_class"] = pred.breath_class;
  j["noise_class"] = pred.noise_label;
  j["breath_probs"] = pred.breath_probs;
  j["noise_probs"] = pred.noise_probs;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int CmdReport(const RunConfig& cfg, const std::vector<std::string>& paths,
              const std::string& out) {
  const std::string root = out.empty() ? DefaultOut(cfg, "report") : out;
  std::vector<NamedReport> reports;
  for (const auto& p : paths) {
    RequireFile(p, "--reports");
    std::ifstream in(p, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    reports.push_back({fs::path(p).stem().string(), EvalReportFromJson(text)});
  }
  fs::create_directories(root);
  json files = json::array();
  for (const auto& [name, content] : ReportTables(reports)) {
    const std::string path = (fs::path(root) / name).string();
    WriteTextFile(path, content);
    files.push_back(path);
  }
  json j;
  j["out"] = root;
  j["files"] = files;
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"respiratory-rate estimation pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  std::string config_path;
  bool dump_config = false;
  uint64_t seed_flag = 0;
  bool seed_set = false;
  std::string run_id_flag;
  app.add_option("--config", config_path, "declarative JSON config file");
  app.add_flag("--dump-config", dump_config,
               "print the effective configuration and exit");
  auto* seed_opt = app.add_option("--seed", seed_flag, "master seed");
  app.add_option("--run-id", run_id_flag, "run identifier for output paths");

  // synth
  auto* synth = app.add_subcommand("synth", "render the synthetic corpus");
  int subjects = -1, segments = -1;
  std::string synth_out;
  synth->add_option("--subjects", subjects, "number of subjects");
  synth->add_option("--segments", segments, "segments per subject");
  synth->add_option("--out", synth_out, "output directory");

  // featurize
  auto* feat = app.add_subcommand("featurize", "extract feature caches");
  std::string feat_manifest, feat_out;
  feat->add_option("--manifest", feat_manifest, "manifest JSONL");
  feat->add_option("--out", feat_out, "cache directory");

  // augment
  auto* aug = app.add_subcommand("augment", "noise-mix indoor training data");
  std::string aug_manifest, aug_bands, aug_out;
  aug->add_option("--manifest", aug_manifest, "manifest JSONL");
  aug->add_option("--bands", aug_bands, "three SNR ranges, lo:hi,lo:hi,lo:hi");
  aug->add_option("--out", aug_out, "output directory");

  // train
  auto* train = app.add_subcommand("train", "fit a model");
  std::string train_manifest, train_features, train_out, train_log, model_arch;
  int neurons = -1, max_epochs = -1, patience = -1, batch_size = -1;
  double lr = -1.0;
  train->add_option("--manifest", train_manifest, "manifest JSONL");
  train->add_option("--features", train_features, "feature cache directory");
  train->add_option("--model", model_arch, "architecture: tc-lstm or lstm");
  train->add_option("--neurons", neurons, "LSTM width: 16, 32, or 64");
  train->add_option("--epochs", max_epochs, "maximum epochs");
  train->add_option("--patience", patience, "early-stop patience");
  train->add_option("--batch-size", batch_size, "mini-batch size");
  train->add_option("--learning-rate", lr, "Adam learning rate");
  train->add_option("--out", train_out, "checkpoint path");
  train->add_option("--log", train_log, "training-log CSV path");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score a checkpoint");
  std::string eval_ckpt, eval_manifest, eval_split = "evaluation";
  std::string eval_features, eval_out;
  eval->add_option("--ckpt", eval_ckpt, "model checkpoint");
  eval->add_option("--manifest", eval_manifest, "manifest JSONL");
  eval->add_option("--split", eval_split, "train|validation|evaluation");
  eval->add_option("--features", eval_features, "feature cache directory");
  eval->add_option("--out", eval_out, "directory for report artifacts");

  // predict
  auto* pred = app.add_subcommand("predict", "single-wav inference");
  std::string pred_ckpt, pred_wav;
  pred->add_option("--ckpt", pred_ckpt, "model checkpoint");
  pred->add_option("--wav", pred_wav, "input wav file");

  // report
  auto* rep = app.add_subcommand("report", "tables and charts from reports");
  std::vector<std::string> rep_paths;
  std::string rep_out;
  rep->add_option("--reports", rep_paths, "evaluation report JSON files");
  rep->add_option("--out", rep_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    RunConfig cfg = LoadConfig(config_path);
    if (!run_id_flag.empty()) cfg.run_id = run_id_flag;
    if (seed_opt->count() > 0) {
      seed_set = true;
      cfg.seed = seed_flag;
    }
    (void)seed_set;
    if (subjects > 0) cfg.synth_subjects = subjects;
    if (segments > 0) cfg.synth_segments = segments;
    if (!model_arch.empty()) cfg.architecture = model_arch;
    if (neurons > 0) cfg.neurons = neurons;
    if (max_epochs > 0) cfg.train.max_epochs = max_epochs;
    if (patience > 0) cfg.train.patience = patience;
    if (batch_size > 0) cfg.train.batch_size = batch_size;
    if (lr > 0) cfg.train.learning_rate = lr;
    if (!aug_bands.empty()) cfg.augment_bands = aug_bands;

    if (dump_config) {
      std::cout << DumpConfig(cfg).dump(2) << "\n";
      return 0;
    }
    if (synth->parsed()) return CmdSynth(cfg, synth_out);
    if (feat->parsed()) return CmdFeaturize(cfg, feat_manifest, feat_out);
    if (aug->parsed())
      return CmdAugment(cfg, aug_manifest, cfg.augment_bands, aug_out);
    if (train->parsed())
      return CmdTrain(cfg, train_manifest, train_features, train_out,
                      train_log);
    if (eval->parsed())
      return CmdEvaluate(cfg, eval_ckpt, eval_manifest, eval_split,
                         eval_features, eval_out);
    if (pred->parsed()) return CmdPredict(pred_ckpt, pred_wav);
    if (rep->parsed()) return CmdReport(cfg, rep_paths, rep_out);
    throw ParameterError("no subcommand given");
  } catch (const ParameterError& e) {
    std::cerr << "ERROR (respr): " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "ERROR (respr): " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "ERROR (respr): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ERROR (respr): " << e.what() << "\n";
    return 2;
  }
}
