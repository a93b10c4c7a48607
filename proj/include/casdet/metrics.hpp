#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace casdet {

constexpr int kNumClasses = 5;

// Binary attribute decomposition of the five classes:
// 0 original, 1 bonafide/bonafide mixture, 2 spoofed speech,
// 3 spoofed environment, 4 both spoofed.
struct LabelAttributes {
  int is_mixed = 0;
  int speech_spoofed = 0;
  int env_spoofed = 0;
};

LabelAttributes label_to_attributes(int class_label);

using Confusion = std::array<std::array<int64_t, kNumClasses>, kNumClasses>;

Confusion confusion_matrix(const std::vector<int>& preds, const std::vector<int>& labels);

// Unweighted mean of per-class F1 over the fixed five-class set. A class
// with no support and no predictions contributes F1 = 0.
double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                std::array<double, kNumClasses>* per_class = nullptr);

// Equal error rate via a threshold sweep over midpoints between adjacent
// distinct scores, with linear interpolation at the FAR/FRR crossing.
// Labels: 1 = positive, 0 = negative. Needs at least one of each.
// threshold_out, when given, receives the crossing threshold.
double eer(const std::vector<double>& scores, const std::vector<int>& binary_labels,
           double* threshold_out = nullptr);

struct AttributeScores {
  double original = 0.0;  // mixed-ness score, 1 - p0
  double speech_spoof = 0.0;
  double env_spoof = 0.0;
};

// Diagnostic scores derived from a normalized 5-class probability vector.
AttributeScores attribute_scores(const std::array<double, kNumClasses>& probs);

struct EvalReport {
  double macro_f1 = 0.0;
  std::array<double, kNumClasses> per_class_f1{};
  Confusion confusion{};
  int64_t n_samples = 0;
  // Present only when every prediction carries a probability vector.
  std::optional<double> eer_original;
  std::optional<double> eer_speech;
  std::optional<double> eer_env;
};

// Scores a prediction file (JSON lines, see cascade module) against the
// labels in a manifest. Attribute EERs are computed only when per-sample
// probabilities are present; hard cascade decisions yield none.
EvalReport report(const std::string& prediction_path, const std::string& manifest_path);

// Rendered two-column table (System, Macro-F1).
std::string render_report_table(const std::string& system_name, const EvalReport& rep);

}  // namespace casdet
