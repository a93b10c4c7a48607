#pragma once

#include <Eigen/Dense>
#include <vector>

#include "casdet/manifest.hpp"

namespace casdet {

enum class BinaryLabel { kOriginal = 0, kMixed = 1 };

struct BinaryDecision {
  double score = 0.0;  // softmax probability of "mixed"
  BinaryLabel decision = BinaryLabel::kOriginal;
  double threshold = 0.5;
};

// score = softmax(logits)[mixed]; decision is mixed iff score >= threshold.
BinaryDecision decide(const Eigen::VectorXd& logits, double threshold);

struct BinaryRecord {
  ManifestRecord record;
  BinaryLabel label = BinaryLabel::kOriginal;
};

// Training protocol: keep only class 0 and class 1 samples, mapped to
// original/mixed. Classes 2-4 never enter stage-1 training.
std::vector<BinaryRecord> select_training_subset(const std::vector<ManifestRecord>& manifest);

// Validation protocol: class 0 -> original, classes 1-4 -> mixed.
BinaryLabel map_validation_labels(int class_label);

}  // namespace casdet
