#pragma once

#include <cstdint>
#include <string>

#include "casdet/augment.hpp"
#include "casdet/layerstack.hpp"
#include "casdet/trainer.hpp"

namespace casdet {

// FNV-1a over the canonical (key-sorted) config dump; echoed into every
// command's outputs for provenance.
uint64_t fnv1a64(const std::string& data);
std::string hash_hex(uint64_t h);

struct PipelineConfig {
  uint64_t seed = 0;
  std::string out_dir = "out";
  std::string data_dir = "out/data";
  double stage1_threshold = 0.5;
  // When set, inference reads the validation-EER threshold recorded in the
  // stage-1 checkpoint instead of stage1_threshold.
  bool stage1_calibrated_threshold = false;

  int d_fused = kDefaultFusedDim;
  double dropout = 0.1;
  TrainConfig train;
  AugmentConfig augment;
  bool augment_in_prep = false;

  // synth
  int n_train_per_class = 200;
  int n_val_per_class = 50;
  int n_test_per_class = 50;
  SynthProfile profile_b1;  // B1 spectral geometry + shared waveform branch
  SynthProfile profile_b2;  // B2 spectral geometry + shared waveform branch

  // prep
  std::string wav_manifest;

  // infer / eval
  std::string infer_mode = "cascade";
  std::string infer_split = "test";
  std::string eval_predictions;  // default: predictions of infer_mode
  std::string eval_manifest;     // default: <data_dir>/<split>_b1.jsonl
  std::string eval_system_name;  // default: infer mode name

  std::string config_hash;  // resolved at load time

  // Conventional paths derived from the directories above.
  std::string manifest_path(const std::string& split, const std::string& system) const;
  std::string checkpoint_path(const std::string& system) const;
  std::string predictions_path(const std::string& mode) const;
};

PipelineConfig load_config(const std::string& path);

}  // namespace casdet
