#include "casdet/stage1.hpp"

#include <cmath>

#include "casdet/error.hpp"

namespace casdet {

BinaryDecision decide(const Eigen::VectorXd& logits, double threshold) {
  if (logits.size() != 2) raise(ErrorCode::kShapeError, "binary decision needs 2 logits");
  if (!logits.allFinite()) raise(ErrorCode::kInvalidInput, "non-finite logits");
  if (threshold <= 0.0 || threshold >= 1.0) {
    raise(ErrorCode::kInvalidConfig, "threshold must be in (0,1)");
  }
  // softmax(logits)[1] == sigmoid(l1 - l0)
  const double score = 1.0 / (1.0 + std::exp(logits(0) - logits(1)));
  BinaryDecision d;
  d.score = score;
  d.threshold = threshold;
  d.decision = score >= threshold ? BinaryLabel::kMixed : BinaryLabel::kOriginal;
  return d;
}

std::vector<BinaryRecord> select_training_subset(const std::vector<ManifestRecord>& manifest) {
  std::vector<BinaryRecord> out;
  for (const auto& rec : manifest) {
    if (rec.class_label < 0 || rec.class_label > 4) {
      raise(ErrorCode::kInvalidLabel, "class label out of range in manifest");
    }
    if (rec.class_label == 0) {
      out.push_back({rec, BinaryLabel::kOriginal});
    } else if (rec.class_label == 1) {
      out.push_back({rec, BinaryLabel::kMixed});
    }
  }
  if (out.empty()) raise(ErrorCode::kEmptySubset, "no class 0/1 samples in manifest");
  return out;
}

BinaryLabel map_validation_labels(int class_label) {
  if (class_label < 0 || class_label > 4) raise(ErrorCode::kInvalidLabel, "class label out of range");
  return class_label == 0 ? BinaryLabel::kOriginal : BinaryLabel::kMixed;
}

}  // namespace casdet
