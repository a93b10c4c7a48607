#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "casdet/head.hpp"
#include "casdet/manifest.hpp"

namespace casdet {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int batch_size = 32;
  int epochs = 50;
  int64_t warmup_steps = 5000;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 0;

  void validate() const;
};

// -log softmax(logits)[label]
double cross_entropy(const Eigen::VectorXd& logits, int label);
// softmax(logits) - onehot(label)
Eigen::VectorXd cross_entropy_grad(const Eigen::VectorXd& logits, int label);

// Linear warmup multiplier: min(1, step / warmup_steps), constant after.
double warmup_multiplier(int64_t step, int64_t warmup_steps);

// Scales all gradients so the global norm is at most max_norm.
// Returns the pre-clip global norm.
double clip_global_norm(std::vector<NamedTensor>& grads, double max_norm);

// Decoupled weight decay: both the Adam step and the decay term are scaled
// by the warmup multiplier, so weight decay applies even at base lr 0.
struct AdamWState {
  std::vector<MatrixXd> m, v;
  int64_t step = 0;
};

AdamWState make_adamw_state(const std::vector<NamedTensor>& params);
void adamw_step(std::vector<NamedTensor>& params, const std::vector<NamedTensor>& grads,
                AdamWState& state, const TrainConfig& cfg);

struct FusionSample {
  DenseStack spec, wave;
  int label = 0;
};
struct BinarySample {
  DenseStack wave;
  int label = 0;  // 0 original, 1 mixed
};

// Mean batch loss; gradients of the mean loss are accumulated into `grads`
// (zeroed first). Per-sample dropout seeds derive from `seed` and the
// sample's batch position. Collects layer-attention rows when asked.
double fusion_batch_gradients(const FusionHeadParams& p, const std::vector<FusionSample>& batch,
                              bool train, uint64_t seed, FusionHeadParams& grads,
                              std::vector<MatrixXd>* alphas = nullptr);
double binary_batch_gradients(const BinaryHeadParams& p, const std::vector<BinarySample>& batch,
                              bool train, uint64_t seed, BinaryHeadParams& grads);

double fusion_batch_loss(const FusionHeadParams& p, const std::vector<FusionSample>& batch,
                         bool train, uint64_t seed);
double binary_batch_loss(const BinaryHeadParams& p, const std::vector<BinarySample>& batch,
                         bool train, uint64_t seed);

// Mean over batch and time of the layer attention, one weight per layer.
// Each row of the telemetry CSV sums to 1.
Eigen::VectorXd mean_layer_weights(const std::vector<MatrixXd>& alphas);

struct TrainPaths {
  std::string checkpoint;
  std::string log_jsonl;      // per-step {step, lr, loss, grad_norm}
  std::string telemetry_csv;  // fusion systems; empty to skip
  std::string summary_json;   // per-epoch metrics + batch class histogram
};

struct FusionTrainResult {
  int best_epoch = -1;
  double best_val_macro_f1 = 0.0;
  std::vector<double> epoch_train_loss;
};

struct BinaryTrainResult {
  int best_epoch = -1;
  double best_val_eer = 1.0;
  double best_val_accuracy = 0.0;
  double calibrated_threshold = 0.5;  // validation-EER operating point
  std::vector<double> epoch_train_loss;
};

// Trains a dual-branch five-class head on embedding-backed manifests.
// Deterministic in cfg.seed; retains the best validation Macro-F1 epoch.
FusionTrainResult train_fusion_system(const std::vector<ManifestRecord>& train_manifest,
                                      const std::vector<ManifestRecord>& val_manifest,
                                      int d_fused, double dropout, const TrainConfig& cfg,
                                      const TrainPaths& paths,
                                      const std::string& extra_meta_json = "{}");

// Trains the stage-1 mix-consistency head. Training uses only class 0/1
// samples; validation maps class 0 -> original and 1-4 -> mixed. Retains
// the lowest validation EER epoch.
BinaryTrainResult train_binary_system(const std::vector<ManifestRecord>& train_manifest,
                                      const std::vector<ManifestRecord>& val_manifest,
                                      double dropout, const TrainConfig& cfg,
                                      const TrainPaths& paths,
                                      const std::string& extra_meta_json = "{}");

}  // namespace casdet
