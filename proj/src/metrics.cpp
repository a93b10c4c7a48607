#include "casdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "casdet/cascade.hpp"
#include "casdet/error.hpp"
#include "casdet/manifest.hpp"

namespace casdet {

LabelAttributes label_to_attributes(int class_label) {
  switch (class_label) {
    case 0: return {0, 0, 0};
    case 1: return {1, 0, 0};
    case 2: return {1, 1, 0};
    case 3: return {1, 0, 1};
    case 4: return {1, 1, 1};
    default: raise(ErrorCode::kInvalidLabel, "class label out of range");
  }
}

Confusion confusion_matrix(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size()) raise(ErrorCode::kInvalidInput, "preds/labels length mismatch");
  Confusion m{};
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= kNumClasses || labels[i] < 0 || labels[i] >= kNumClasses) {
      raise(ErrorCode::kInvalidLabel, "class out of range");
    }
    m[static_cast<size_t>(labels[i])][static_cast<size_t>(preds[i])]++;
  }
  return m;
}

double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                std::array<double, kNumClasses>* per_class) {
  const Confusion m = confusion_matrix(preds, labels);
  double total = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    int64_t tp = m[static_cast<size_t>(c)][static_cast<size_t>(c)];
    int64_t fp = 0, fn = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      if (k == c) continue;
      fp += m[static_cast<size_t>(k)][static_cast<size_t>(c)];
      fn += m[static_cast<size_t>(c)][static_cast<size_t>(k)];
    }
    const double precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double f1 =
        (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    if (per_class) (*per_class)[static_cast<size_t>(c)] = f1;
    total += f1;
  }
  return total / kNumClasses;
}

double eer(const std::vector<double>& scores, const std::vector<int>& binary_labels,
           double* threshold_out) {
  if (scores.size() != binary_labels.size()) {
    raise(ErrorCode::kInvalidInput, "scores/labels length mismatch");
  }
  int64_t n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) raise(ErrorCode::kInvalidInput, "non-finite score");
    if (binary_labels[i] == 1) {
      ++n_pos;
    } else if (binary_labels[i] == 0) {
      ++n_neg;
    } else {
      raise(ErrorCode::kInvalidLabel, "binary label must be 0 or 1");
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    raise(ErrorCode::kDegenerateLabels, "need at least one positive and one negative");
  }

  // Sort descending by score. Operating points sit at the boundaries
  // between distinct score groups; accepting the top-k samples gives
  // FAR = neg_accepted / n_neg and FRR = pos_rejected / n_pos. Each
  // boundary's threshold is the midpoint to the next distinct score.
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double far_prev = 0.0, frr_prev = 1.0;
  double d_prev = frr_prev - far_prev;  // starts at +1, ends at -1
  double tau_prev = scores[order[0]] + 1.0;
  int64_t acc_pos = 0, acc_neg = 0;
  size_t i = 0;
  while (i < order.size()) {
    // consume one group of equal scores
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (binary_labels[order[i]] == 1) {
        ++acc_pos;
      } else {
        ++acc_neg;
      }
      ++i;
    }
    const double tau = i < order.size() ? 0.5 * (s + scores[order[i]]) : s - 1.0;
    const double far = static_cast<double>(acc_neg) / static_cast<double>(n_neg);
    const double frr = static_cast<double>(n_pos - acc_pos) / static_cast<double>(n_pos);
    const double d = frr - far;
    if (d <= 0.0) {
      if (d_prev <= 0.0) {
        if (threshold_out) *threshold_out = tau_prev;
        return far_prev;  // crossing already at the previous point
      }
      const double lambda = d_prev / (d_prev - d);
      if (threshold_out) *threshold_out = tau_prev + lambda * (tau - tau_prev);
      return far_prev + lambda * (far - far_prev);
    }
    far_prev = far;
    frr_prev = frr;
    d_prev = d;
    tau_prev = tau;
  }
  if (threshold_out) *threshold_out = tau_prev;
  return far_prev;  // unreachable for valid inputs: the final point has d = -1
}

AttributeScores attribute_scores(const std::array<double, kNumClasses>& probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) raise(ErrorCode::kInvalidInput, "bad probability entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-4) raise(ErrorCode::kInvalidInput, "probabilities must sum to 1");
  AttributeScores s;
  s.original = 1.0 - probs[0];
  s.speech_spoof = probs[2] + probs[4];
  s.env_spoof = probs[3] + probs[4];
  return s;
}

EvalReport report(const std::string& prediction_path, const std::string& manifest_path) {
  const std::vector<PredictionRecord> preds = read_predictions(prediction_path);
  const std::vector<ManifestRecord> manifest = read_manifest(manifest_path);
  if (preds.empty()) raise(ErrorCode::kInvalidInput, "empty prediction file");

  std::map<std::string, int> labels_by_id;
  for (const auto& rec : manifest) {
    if (!labels_by_id.emplace(rec.id, rec.class_label).second) {
      raise(ErrorCode::kInvalidInput, "duplicate id in manifest: " + rec.id);
    }
  }
  if (preds.size() != manifest.size()) {
    raise(ErrorCode::kInvalidInput, "prediction/manifest size mismatch");
  }

  std::vector<int> y_pred, y_true;
  y_pred.reserve(preds.size());
  y_true.reserve(preds.size());
  bool all_probs = true;
  std::set<std::string> seen;
  for (const auto& p : preds) {
    auto it = labels_by_id.find(p.id);
    if (it == labels_by_id.end()) {
      raise(ErrorCode::kInvalidInput, "prediction id not in manifest: " + p.id);
    }
    if (!seen.insert(p.id).second) {
      raise(ErrorCode::kInvalidInput, "duplicate prediction id: " + p.id);
    }
    y_pred.push_back(p.final_class);
    y_true.push_back(it->second);
    if (!p.probs) all_probs = false;
  }

  EvalReport rep;
  rep.n_samples = static_cast<int64_t>(preds.size());
  rep.macro_f1 = macro_f1(y_pred, y_true, &rep.per_class_f1);
  rep.confusion = confusion_matrix(y_pred, y_true);

  if (all_probs) {
    std::vector<double> s_orig, s_speech, s_env;
    std::vector<int> l_orig, l_speech, l_env;
    for (size_t i = 0; i < preds.size(); ++i) {
      const AttributeScores s = attribute_scores(*preds[i].probs);
      const LabelAttributes a = label_to_attributes(y_true[i]);
      s_orig.push_back(s.original);
      l_orig.push_back(a.is_mixed);
      s_speech.push_back(s.speech_spoof);
      l_speech.push_back(a.speech_spoofed);
      s_env.push_back(s.env_spoof);
      l_env.push_back(a.env_spoofed);
    }
    auto try_eer = [](const std::vector<double>& s, const std::vector<int>& l)
        -> std::optional<double> {
      try {
        return eer(s, l);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kDegenerateLabels) return std::nullopt;
        throw;
      }
    };
    rep.eer_original = try_eer(s_orig, l_orig);
    rep.eer_speech = try_eer(s_speech, l_speech);
    rep.eer_env = try_eer(s_env, l_env);
  }
  return rep;
}

std::string render_report_table(const std::string& system_name, const EvalReport& rep) {
  std::ostringstream out;
  const size_t name_w = std::max<size_t>(system_name.size(), 6);
  out << std::left << std::setw(static_cast<int>(name_w + 2)) << "System" << "Macro-F1\n";
  out << std::string(name_w, '-') << "  " << std::string(8, '-') << "\n";
  out << std::left << std::setw(static_cast<int>(name_w + 2)) << system_name << std::fixed
      << std::setprecision(4) << rep.macro_f1 << "\n";
  return out.str();
}

}  // namespace casdet
