#include "casdet/config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "casdet/error.hpp"

namespace casdet {

using nlohmann::json;

uint64_t fnv1a64(const std::string& data) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

namespace {

SynthBranch parse_branch(const json& j, const SynthBranch& defaults) {
  SynthBranch b = defaults;
  b.frames = j.value("frames", b.frames);
  b.dim = j.value("dim", b.dim);
  if (j.contains("layer_ids")) b.layer_ids = j.at("layer_ids").get<std::vector<uint32_t>>();
  b.mix_scale = j.value("mix_scale", b.mix_scale);
  b.speech_scale = j.value("speech_scale", b.speech_scale);
  b.env_scale = j.value("env_scale", b.env_scale);
  return b;
}

void parse_profiles(const json& j, PipelineConfig& cfg) {
  // Shared scalar geometry; per-branch blocks for B1/B2 spectral and the
  // common waveform branch.
  SynthProfile base;
  base.d_base = j.value("d_base", base.d_base);
  base.separation = j.value("separation", base.separation);
  base.noise_std = j.value("noise_std", base.noise_std);

  // B1's spectral view is weak on environment artifacts and B2's on speech
  // artifacts, so the two multi-class systems fail on complementary samples
  // while the shared waveform view carries the mix-consistency cue.
  SynthBranch b1_spec{12, 32, {5, 6, 7}, 1.0, 1.0, 0.17};
  SynthBranch b2_spec{12, 48, {19, 20, 21}, 1.0, 0.17, 1.0};
  SynthBranch wave{12, 32, {5}, 1.0, 0.05, 0.05};
  if (j.contains("b1_spectral")) b1_spec = parse_branch(j.at("b1_spectral"), b1_spec);
  if (j.contains("b2_spectral")) b2_spec = parse_branch(j.at("b2_spectral"), b2_spec);
  if (j.contains("waveform")) wave = parse_branch(j.at("waveform"), wave);

  cfg.profile_b1 = base;
  cfg.profile_b1.spectral = b1_spec;
  cfg.profile_b1.waveform = wave;
  cfg.profile_b2 = base;
  cfg.profile_b2.spectral = b2_spec;
  cfg.profile_b2.waveform = wave;
}

template <typename T>
void parse_range(const json& j, const char* key, T& lo, T& hi) {
  if (!j.contains(key)) return;
  const auto& r = j.at(key);
  if (!r.is_array() || r.size() != 2) {
    raise(ErrorCode::kInvalidConfig, std::string(key) + " must be a [min, max] pair");
  }
  lo = r[0].get<T>();
  hi = r[1].get<T>();
}

}  // namespace

std::string PipelineConfig::manifest_path(const std::string& split,
                                          const std::string& system) const {
  return data_dir + "/" + split + "_" + system + ".jsonl";
}

std::string PipelineConfig::checkpoint_path(const std::string& system) const {
  return out_dir + "/ckpt_" + system + ".ckpt";
}

std::string PipelineConfig::predictions_path(const std::string& mode) const {
  return out_dir + "/predictions_" + mode + ".jsonl";
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::kInvalidConfig, "cannot open config " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::kInvalidConfig, "config is not valid JSON: " + path);

  PipelineConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.data_dir = j.value("data_dir", cfg.data_dir);
    cfg.stage1_threshold = j.value("stage1_threshold", cfg.stage1_threshold);
    cfg.stage1_calibrated_threshold =
        j.value("stage1_calibrated_threshold", cfg.stage1_calibrated_threshold);

    if (j.contains("head")) {
      const json& h = j.at("head");
      cfg.d_fused = h.value("d_fused", cfg.d_fused);
      cfg.dropout = h.value("dropout", cfg.dropout);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      cfg.train.lr = t.value("lr", cfg.train.lr);
      cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.warmup_steps = t.value("warmup_steps", cfg.train.warmup_steps);
      cfg.train.clip_norm = t.value("clip_norm", cfg.train.clip_norm);
      cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
      cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
      cfg.train.eps = t.value("eps", cfg.train.eps);
    }
    if (j.contains("augment")) {
      const json& a = j.at("augment");
      cfg.augment.activation_prob = a.value("activation_prob", cfg.augment.activation_prob);
      if (a.contains("mode")) {
        cfg.augment.mode = augment_mode_from_string(a.at("mode").get<std::string>());
      }
      parse_range(a, "notch_count", cfg.augment.notch_min, cfg.augment.notch_max);
      cfg.augment.filter_order = a.value("filter_order", cfg.augment.filter_order);
      parse_range(a, "snr_range_db", cfg.augment.snr_min_db, cfg.augment.snr_max_db);
      parse_range(a, "impulse_rate", cfg.augment.impulse_rate_min, cfg.augment.impulse_rate_max);
      cfg.augment_in_prep = a.value("apply_in_prep", cfg.augment_in_prep);
    }
    if (j.contains("synth")) {
      const json& s = j.at("synth");
      cfg.n_train_per_class = s.value("n_train_per_class", cfg.n_train_per_class);
      cfg.n_val_per_class = s.value("n_val_per_class", cfg.n_val_per_class);
      cfg.n_test_per_class = s.value("n_test_per_class", cfg.n_test_per_class);
      if (s.contains("profile")) {
        parse_profiles(s.at("profile"), cfg);
      } else {
        parse_profiles(json::object(), cfg);
      }
    } else {
      parse_profiles(json::object(), cfg);
    }
    if (j.contains("prep")) {
      cfg.wav_manifest = j.at("prep").value("wav_manifest", cfg.wav_manifest);
    }
    if (j.contains("infer")) {
      const json& i = j.at("infer");
      cfg.infer_mode = i.value("mode", cfg.infer_mode);
      cfg.infer_split = i.value("split", cfg.infer_split);
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      cfg.eval_predictions = e.value("predictions", cfg.eval_predictions);
      cfg.eval_manifest = e.value("manifest", cfg.eval_manifest);
      cfg.eval_system_name = e.value("system_name", cfg.eval_system_name);
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::kInvalidConfig, std::string("bad config value: ") + e.what());
  }

  if (cfg.n_train_per_class < 1 || cfg.n_val_per_class < 1 || cfg.n_test_per_class < 1) {
    raise(ErrorCode::kInvalidConfig, "synth per-class counts must be >= 1");
  }
  if (cfg.stage1_threshold <= 0.0 || cfg.stage1_threshold >= 1.0) {
    raise(ErrorCode::kInvalidConfig, "stage1_threshold must be in (0,1)");
  }
  cfg.augment.validate();
  cfg.train.seed = cfg.seed;
  cfg.profile_b1.seed = cfg.seed;
  cfg.profile_b2.seed = cfg.seed;
  cfg.config_hash = hash_hex(fnv1a64(j.dump()));
  return cfg;
}

}  // namespace casdet
