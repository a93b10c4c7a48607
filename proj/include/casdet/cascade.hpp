#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "casdet/manifest.hpp"
#include "casdet/stage1.hpp"

namespace casdet {

struct CascadeDecision {
  int final_class = 0;
  bool forced_original = false;
  bool overridden_second_best = false;
  BinaryDecision stage1;
  Eigen::VectorXd ensemble_logits;
};

// Componentwise arithmetic mean of raw logits (mean precedes argmax).
Eigen::VectorXd ensemble_mean(const Eigen::VectorXd& b1, const Eigen::VectorXd& b2);

// Hard calibration: original -> forced class 0; mixed with ensemble argmax 0
// -> best non-original class (override); otherwise the ensemble argmax.
// Ties break toward the lowest class index.
CascadeDecision calibrate(const BinaryDecision& stage1, const Eigen::VectorXd& ensemble);

enum class InferMode { kCascade, kB1, kB2, kB1B2, kAB1, kAB2 };

InferMode infer_mode_from_string(const std::string& name);
const char* infer_mode_name(InferMode mode);
bool infer_mode_uses_stage1(InferMode mode);

// One line of the prediction file. Soft (sub-system) modes carry a
// probability vector; calibrated modes do not, since the hard logic breaks
// the score monotonicity the attribute EERs need.
struct PredictionRecord {
  std::string id;
  int final_class = 0;
  std::array<double, 5> ensemble_logits{};
  bool forced_original = false;
  bool overridden_second_best = false;
  std::optional<double> stage1_score;
  std::optional<std::array<double, 5>> probs;
};

void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(const std::string& path);

// Runs the requested inference mode over per-system manifests (which must
// agree on ids and order). Unused manifests/checkpoints may be empty.
std::vector<PredictionRecord> infer_batch(InferMode mode,
                                          const std::vector<ManifestRecord>& manifest_a,
                                          const std::vector<ManifestRecord>& manifest_b1,
                                          const std::vector<ManifestRecord>& manifest_b2,
                                          const std::string& ckpt_a, const std::string& ckpt_b1,
                                          const std::string& ckpt_b2, double threshold);

}  // namespace casdet
