#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "casdet/audio.hpp"
#include "casdet/augment.hpp"
#include "casdet/cascade.hpp"
#include "casdet/error.hpp"
#include "casdet/head.hpp"
#include "casdet/layerstack.hpp"
#include "casdet/manifest.hpp"
#include "casdet/metrics.hpp"
#include "casdet/rng.hpp"
#include "casdet/stage1.hpp"
#include "casdet/trainer.hpp"

namespace casdet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_run_meta(const PipelineConfig& cfg, const std::string& command, json extra) {
  fs::create_directories(cfg.out_dir);
  extra["command"] = command;
  extra["config_hash"] = cfg.config_hash;
  extra["seed"] = cfg.seed;
  std::ofstream out(cfg.out_dir + "/run_" + command + ".json");
  out << extra.dump(2) << "\n";
  std::cout << command << ": config_hash " << cfg.config_hash << "\n";
}

LayerStack mel_to_stack(const MelFrames& mel) {
  LayerStack s;
  s.branch_tag = BranchTag::kSpectral;
  s.layer_ids = {0};
  s.layers = 1;
  s.frames = kMelFrames;
  s.dim = kMelBins;
  s.data = mel.data;
  return s;
}

LayerStack wave_to_stack(const Waveform& w) {
  LayerStack s;
  s.branch_tag = BranchTag::kWaveform;
  s.layer_ids = {0};
  s.layers = 1;
  s.frames = static_cast<uint32_t>(w.samples.size());
  s.dim = 1;
  s.data = w.samples;
  return s;
}

}  // namespace

int cmd_prep(const PipelineConfig& cfg) {
  if (cfg.wav_manifest.empty()) {
    raise(ErrorCode::kInvalidConfig, "prep requires prep.wav_manifest");
  }
  const std::vector<ManifestRecord> wavs = read_manifest(cfg.wav_manifest);
  if (wavs.empty()) raise(ErrorCode::kInvalidInput, "empty wav manifest");

  fs::create_directories(cfg.data_dir + "/prep");
  fs::create_directories(cfg.out_dir);
  std::vector<ManifestRecord> out_records;
  size_t n_failed = 0;
  std::ofstream err_log(cfg.out_dir + "/prep_errors.log");
  for (const auto& rec : wavs) {
    try {
      if (rec.wav_path.empty()) raise(ErrorCode::kInvalidInput, "record missing wav_path");
      Waveform w = to_mono(read_wav(rec.wav_path));
      w = resample_to_16k(w);
      w = fix_duration_repeat_jitter(w, derive_seed(cfg.seed, {0x21, fnv1a64(rec.id)}));
      if (cfg.augment_in_prep) {
        auto pair = synchronized_pair(w, cfg.augment, derive_seed(cfg.seed, {0x22, fnv1a64(rec.id)}));
        w = pair.first;
      }
      const MelFrames mel = normalize(logmel(w));

      ManifestRecord out = rec;
      out.wav_path.clear();
      out.spectral_path = cfg.data_dir + "/prep/" + rec.id + "_mel.lstk";
      out.waveform_path = cfg.data_dir + "/prep/" + rec.id + "_wave.lstk";
      write_layerstack(out.spectral_path, mel_to_stack(mel));
      write_layerstack(out.waveform_path, wave_to_stack(w));
      out_records.push_back(std::move(out));
    } catch (const Error& e) {
      ++n_failed;
      err_log << rec.id << "\t" << e.what() << "\n";
      std::cerr << "prep: " << rec.id << " failed: " << e.what() << "\n";
    }
  }
  write_manifest(cfg.data_dir + "/prep.jsonl", out_records);
  write_run_meta(cfg, "prep",
                 {{"n_ok", out_records.size()}, {"n_failed", n_failed},
                  {"manifest", cfg.data_dir + "/prep.jsonl"}});
  if (n_failed > 0) raise(ErrorCode::kInvalidAudio, std::to_string(n_failed) + " file(s) failed");
  return 0;
}

int cmd_synth(const PipelineConfig& cfg) {
  cfg.profile_b1.validate();
  cfg.profile_b2.validate();
  fs::create_directories(cfg.data_dir + "/emb");

  const std::vector<std::pair<std::string, int>> splits = {
      {"train", cfg.n_train_per_class},
      {"val", cfg.n_val_per_class},
      {"test", cfg.n_test_per_class},
  };

  json counts;
  for (size_t split_idx = 0; split_idx < splits.size(); ++split_idx) {
    const auto& [split, n_per_class] = splits[split_idx];
    std::vector<ManifestRecord> man_a, man_b1, man_b2;
    for (int c = 0; c < kNumClasses; ++c) {
      for (int i = 0; i < n_per_class; ++i) {
        std::string id = split + "_c" + std::to_string(c) + "_" + std::to_string(i);
        const uint64_t sample_seed =
            derive_seed(cfg.seed, {0x31, split_idx, static_cast<uint64_t>(c),
                                   static_cast<uint64_t>(i)});
        // The waveform stack is shared by all systems, matching a single
        // frozen waveform backbone feeding A and both B branches.
        auto [spec_b1, wave] = synth_sample(cfg.profile_b1, c, derive_seed(sample_seed, {1}));
        auto [spec_b2, wave_unused] = synth_sample(cfg.profile_b2, c, derive_seed(sample_seed, {2}));

        const std::string base = cfg.data_dir + "/emb/" + id;
        write_layerstack(base + "_b1.lstk", spec_b1);
        write_layerstack(base + "_b2.lstk", spec_b2);
        write_layerstack(base + "_wave.lstk", wave);

        ManifestRecord rec;
        rec.id = id;
        rec.class_label = c;
        rec.waveform_path = base + "_wave.lstk";
        man_a.push_back(rec);
        rec.spectral_path = base + "_b1.lstk";
        man_b1.push_back(rec);
        rec.spectral_path = base + "_b2.lstk";
        man_b2.push_back(rec);
      }
    }
    write_manifest(cfg.manifest_path(split, "a"), man_a);
    write_manifest(cfg.manifest_path(split, "b1"), man_b1);
    write_manifest(cfg.manifest_path(split, "b2"), man_b2);
    counts[split] = man_a.size();
  }
  write_run_meta(cfg, "synth", {{"counts", counts}, {"data_dir", cfg.data_dir}});
  return 0;
}

int cmd_train(const PipelineConfig& cfg, const std::string& system) {
  fs::create_directories(cfg.out_dir);
  json extra = {{"config_hash", cfg.config_hash}, {"system", system}};

  TrainConfig train_cfg = cfg.train;
  if (system == "A") {
    train_cfg.seed = derive_seed(cfg.seed, {0x41});
    const auto train_man = read_manifest(cfg.manifest_path("train", "a"));
    const auto val_man = read_manifest(cfg.manifest_path("val", "a"));
    TrainPaths paths;
    paths.checkpoint = cfg.checkpoint_path("a");
    paths.log_jsonl = cfg.out_dir + "/train_log_a.jsonl";
    paths.summary_json = cfg.out_dir + "/train_summary_a.json";
    const BinaryTrainResult r =
        train_binary_system(train_man, val_man, cfg.dropout, train_cfg, paths, extra.dump());
    std::cout << "train A: best epoch " << r.best_epoch << ", val EER " << r.best_val_eer
              << ", val accuracy " << r.best_val_accuracy << "\n";
  } else if (system == "B1" || system == "B2") {
    const std::string tag = system == "B1" ? "b1" : "b2";
    train_cfg.seed = derive_seed(cfg.seed, {system == "B1" ? 0x42ull : 0x43ull});
    const auto train_man = read_manifest(cfg.manifest_path("train", tag));
    const auto val_man = read_manifest(cfg.manifest_path("val", tag));
    TrainPaths paths;
    paths.checkpoint = cfg.checkpoint_path(tag);
    paths.log_jsonl = cfg.out_dir + "/train_log_" + tag + ".jsonl";
    paths.telemetry_csv = cfg.out_dir + "/telemetry_" + tag + ".csv";
    paths.summary_json = cfg.out_dir + "/train_summary_" + tag + ".json";
    const FusionTrainResult r = train_fusion_system(train_man, val_man, cfg.d_fused, cfg.dropout,
                                                    train_cfg, paths, extra.dump());
    std::cout << "train " << system << ": best epoch " << r.best_epoch << ", val Macro-F1 "
              << r.best_val_macro_f1 << "\n";
  } else {
    raise(ErrorCode::kInvalidConfig, "unknown system (want A, B1 or B2): " + system);
  }
  write_run_meta(cfg, "train_" + system, {{"system", system}});
  return 0;
}

int cmd_infer(const PipelineConfig& cfg, const std::string& mode_name) {
  const InferMode mode = infer_mode_from_string(mode_name);
  fs::create_directories(cfg.out_dir);

  auto manifest_if = [&](const char* system, bool needed) {
    return needed ? read_manifest(cfg.manifest_path(cfg.infer_split, system))
                  : std::vector<ManifestRecord>{};
  };
  const bool use_a = infer_mode_uses_stage1(mode);
  const bool use_b1 = mode != InferMode::kB2 && mode != InferMode::kAB2;
  const bool use_b2 = mode != InferMode::kB1 && mode != InferMode::kAB1;

  double threshold = cfg.stage1_threshold;
  if (use_a && cfg.stage1_calibrated_threshold) {
    const json meta = json::parse(checkpoint_meta_json(cfg.checkpoint_path("a")));
    if (!meta.contains("calibrated_threshold")) {
      raise(ErrorCode::kInvalidConfig, "stage-1 checkpoint has no calibrated threshold");
    }
    threshold = meta.at("calibrated_threshold").get<double>();
    if (threshold <= 0.0 || threshold >= 1.0) {
      raise(ErrorCode::kInvalidConfig, "calibrated threshold outside (0,1)");
    }
  }

  const std::vector<PredictionRecord> preds = infer_batch(
      mode, manifest_if("a", use_a), manifest_if("b1", use_b1), manifest_if("b2", use_b2),
      cfg.checkpoint_path("a"), cfg.checkpoint_path("b1"), cfg.checkpoint_path("b2"), threshold);

  const std::string pred_path = cfg.predictions_path(mode_name);
  write_predictions(pred_path, preds);
  write_run_meta(cfg, "infer_" + mode_name,
                 {{"mode", mode_name}, {"n", preds.size()}, {"predictions", pred_path}});
  std::cout << "infer " << mode_name << ": " << preds.size() << " predictions -> " << pred_path
            << "\n";
  return 0;
}

int cmd_eval(const PipelineConfig& cfg) {
  const std::string pred_path =
      cfg.eval_predictions.empty() ? cfg.predictions_path(cfg.infer_mode) : cfg.eval_predictions;
  const std::string man_path =
      cfg.eval_manifest.empty() ? cfg.manifest_path(cfg.infer_split, "b1") : cfg.eval_manifest;
  const std::string system_name =
      cfg.eval_system_name.empty() ? cfg.infer_mode : cfg.eval_system_name;

  const EvalReport rep = report(pred_path, man_path);

  fs::create_directories(cfg.out_dir);
  json j;
  j["system"] = system_name;
  j["config_hash"] = cfg.config_hash;
  j["n_samples"] = rep.n_samples;
  j["macro_f1"] = rep.macro_f1;
  j["per_class_f1"] = rep.per_class_f1;
  j["confusion"] = rep.confusion;
  if (rep.eer_original) j["eer_original"] = *rep.eer_original;
  if (rep.eer_speech) j["eer_speech"] = *rep.eer_speech;
  if (rep.eer_env) j["eer_env"] = *rep.eer_env;

  const std::string base = cfg.out_dir + "/report_" + system_name;
  {
    std::ofstream out(base + ".json");
    out << j.dump(2) << "\n";
  }
  const std::string table = render_report_table(system_name, rep);
  {
    std::ofstream out(base + ".txt");
    out << table;
  }
  std::cout << table;
  write_run_meta(cfg, "eval_" + system_name,
                 {{"macro_f1", rep.macro_f1}, {"report", base + ".json"}});
  return 0;
}

}  // namespace casdet::cli
