#include "casdet/cascade.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "casdet/error.hpp"
#include "casdet/head.hpp"
#include "casdet/layerstack.hpp"

namespace casdet {

using nlohmann::json;

namespace {

int argmax_lowest(const Eigen::VectorXd& v, int from = 0) {
  int best = from;
  for (int i = from + 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

}  // namespace

Eigen::VectorXd ensemble_mean(const Eigen::VectorXd& b1, const Eigen::VectorXd& b2) {
  if (b1.size() != b2.size()) raise(ErrorCode::kShapeError, "ensemble logit size mismatch");
  if (!b1.allFinite() || !b2.allFinite()) raise(ErrorCode::kInvalidInput, "non-finite logits");
  return 0.5 * (b1 + b2);
}

CascadeDecision calibrate(const BinaryDecision& stage1, const Eigen::VectorXd& ensemble) {
  if (ensemble.size() != 5) raise(ErrorCode::kShapeError, "calibrate needs 5 logits");
  if (!ensemble.allFinite()) raise(ErrorCode::kInvalidInput, "non-finite logits");

  CascadeDecision out;
  out.stage1 = stage1;
  out.ensemble_logits = ensemble;
  if (stage1.decision == BinaryLabel::kOriginal) {
    out.final_class = 0;
    out.forced_original = true;
    return out;
  }
  const int top = argmax_lowest(ensemble);
  if (top != 0) {
    out.final_class = top;
    return out;
  }
  out.final_class = argmax_lowest(ensemble, 1);
  out.overridden_second_best = true;
  return out;
}

InferMode infer_mode_from_string(const std::string& name) {
  if (name == "cascade") return InferMode::kCascade;
  if (name == "b1") return InferMode::kB1;
  if (name == "b2") return InferMode::kB2;
  if (name == "b1b2") return InferMode::kB1B2;
  if (name == "a+b1") return InferMode::kAB1;
  if (name == "a+b2") return InferMode::kAB2;
  raise(ErrorCode::kInvalidConfig, "unknown inference mode: " + name);
}

const char* infer_mode_name(InferMode mode) {
  switch (mode) {
    case InferMode::kCascade: return "cascade";
    case InferMode::kB1: return "b1";
    case InferMode::kB2: return "b2";
    case InferMode::kB1B2: return "b1b2";
    case InferMode::kAB1: return "a+b1";
    case InferMode::kAB2: return "a+b2";
  }
  return "unknown";
}

bool infer_mode_uses_stage1(InferMode mode) {
  return mode == InferMode::kCascade || mode == InferMode::kAB1 || mode == InferMode::kAB2;
}

void write_predictions(const std::string& path, const std::vector<PredictionRecord>& records) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::kInvalidInput, "cannot write " + path);
  for (const auto& r : records) {
    json line;
    line["id"] = r.id;
    line["final_class"] = r.final_class;
    line["ensemble_logits"] = r.ensemble_logits;
    line["forced_original"] = r.forced_original;
    line["overridden_second_best"] = r.overridden_second_best;
    if (r.stage1_score) line["stage1_score"] = *r.stage1_score;
    if (r.probs) line["probs"] = *r.probs;
    out << line.dump() << "\n";
  }
  if (!out) raise(ErrorCode::kInvalidInput, "write failed: " + path);
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::kInvalidInput, "cannot open " + path);
  std::vector<PredictionRecord> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      raise(ErrorCode::kInvalidInput, "bad JSON at " + path + ":" + std::to_string(line_no));
    }
    PredictionRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.final_class = j.at("final_class").get<int>();
      r.ensemble_logits = j.at("ensemble_logits").get<std::array<double, 5>>();
      r.forced_original = j.value("forced_original", false);
      r.overridden_second_best = j.value("overridden_second_best", false);
      if (j.contains("stage1_score")) r.stage1_score = j.at("stage1_score").get<double>();
      if (j.contains("probs")) r.probs = j.at("probs").get<std::array<double, 5>>();
    } catch (const json::exception& e) {
      raise(ErrorCode::kInvalidInput,
            "bad prediction record at " + path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::array<double, 5> softmax5(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  std::array<double, 5> p{};
  double sum = 0.0;
  for (int i = 0; i < 5; ++i) {
    p[static_cast<size_t>(i)] = std::exp(logits(i) - m);
    sum += p[static_cast<size_t>(i)];
  }
  for (auto& v : p) v /= sum;
  return p;
}

void check_aligned(const std::vector<ManifestRecord>& a, const std::vector<ManifestRecord>& b,
                   const char* what) {
  if (a.size() != b.size()) raise(ErrorCode::kInvalidInput, std::string(what) + ": size mismatch");
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id) raise(ErrorCode::kInvalidInput, std::string(what) + ": id mismatch");
  }
}

Eigen::VectorXd fusion_logits(const FusionHeadParams& p, const ManifestRecord& rec) {
  const DenseStack spec = to_dense(read_layerstack(rec.spectral_path));
  const DenseStack wave = to_dense(read_layerstack(rec.waveform_path));
  return fusion_forward(p, spec, wave, ForwardOptions{});
}

}  // namespace

std::vector<PredictionRecord> infer_batch(InferMode mode,
                                          const std::vector<ManifestRecord>& manifest_a,
                                          const std::vector<ManifestRecord>& manifest_b1,
                                          const std::vector<ManifestRecord>& manifest_b2,
                                          const std::string& ckpt_a, const std::string& ckpt_b1,
                                          const std::string& ckpt_b2, double threshold) {
  const bool use_a = infer_mode_uses_stage1(mode);
  const bool use_b1 = mode != InferMode::kB2 && mode != InferMode::kAB2;
  const bool use_b2 = mode != InferMode::kB1 && mode != InferMode::kAB1;

  const std::vector<ManifestRecord>& base =
      use_b1 ? manifest_b1 : (use_b2 ? manifest_b2 : manifest_a);
  if (base.empty()) raise(ErrorCode::kInvalidInput, "empty inference manifest");
  if (use_a) check_aligned(base, manifest_a, "stage-1 manifest");
  if (use_b1 && use_b2) check_aligned(manifest_b1, manifest_b2, "b1/b2 manifests");

  BinaryHeadParams head_a;
  FusionHeadParams head_b1, head_b2;
  if (use_a) head_a = load_binary_head(ckpt_a);
  if (use_b1) head_b1 = load_fusion_head(ckpt_b1);
  if (use_b2) head_b2 = load_fusion_head(ckpt_b2);

  std::vector<PredictionRecord> out;
  out.reserve(base.size());
  for (size_t i = 0; i < base.size(); ++i) {
    Eigen::VectorXd logits;
    if (use_b1 && use_b2) {
      logits = ensemble_mean(fusion_logits(head_b1, manifest_b1[i]),
                             fusion_logits(head_b2, manifest_b2[i]));
    } else if (use_b1) {
      logits = fusion_logits(head_b1, manifest_b1[i]);
    } else {
      logits = fusion_logits(head_b2, manifest_b2[i]);
    }

    PredictionRecord rec;
    rec.id = base[i].id;
    for (int c = 0; c < 5; ++c) rec.ensemble_logits[static_cast<size_t>(c)] = logits(c);

    if (use_a) {
      const DenseStack wave = to_dense(read_layerstack(manifest_a[i].waveform_path));
      const Eigen::VectorXd bin_logits = binary_forward(head_a, wave, ForwardOptions{});
      const BinaryDecision stage1 = decide(bin_logits, threshold);
      const CascadeDecision dec = calibrate(stage1, logits);
      rec.final_class = dec.final_class;
      rec.forced_original = dec.forced_original;
      rec.overridden_second_best = dec.overridden_second_best;
      rec.stage1_score = stage1.score;
    } else {
      rec.final_class = argmax_lowest(logits);
      rec.probs = softmax5(logits);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace casdet
