#include "casdet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "casdet/error.hpp"
#include "casdet/layerstack.hpp"
#include "casdet/metrics.hpp"
#include "casdet/rng.hpp"
#include "casdet/stage1.hpp"

namespace casdet {

using nlohmann::json;

void TrainConfig::validate() const {
  if (lr < 0.0 || weight_decay < 0.0) raise(ErrorCode::kInvalidConfig, "negative lr/weight decay");
  if (batch_size < 1 || epochs < 1) raise(ErrorCode::kInvalidConfig, "batch_size/epochs must be >= 1");
  if (warmup_steps < 0) raise(ErrorCode::kInvalidConfig, "warmup_steps must be >= 0");
  if (clip_norm <= 0.0) raise(ErrorCode::kInvalidConfig, "clip_norm must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || eps <= 0.0) {
    raise(ErrorCode::kInvalidConfig, "bad optimizer constants");
  }
}

double cross_entropy(const Eigen::VectorXd& logits, int label) {
  if (label < 0 || label >= logits.size()) raise(ErrorCode::kInvalidLabel, "label out of range");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(label);
}

Eigen::VectorXd cross_entropy_grad(const Eigen::VectorXd& logits, int label) {
  if (label < 0 || label >= logits.size()) raise(ErrorCode::kInvalidLabel, "label out of range");
  const double m = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - m).exp();
  p /= p.sum();
  p(label) -= 1.0;
  return p;
}

double warmup_multiplier(int64_t step, int64_t warmup_steps) {
  if (warmup_steps <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
}

double clip_global_norm(std::vector<NamedTensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& nt : grads) sq += nt.tensor->squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& nt : grads) *nt.tensor *= scale;
  }
  return norm;
}

AdamWState make_adamw_state(const std::vector<NamedTensor>& params) {
  AdamWState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& nt : params) {
    s.m.push_back(MatrixXd::Zero(nt.tensor->rows(), nt.tensor->cols()));
    s.v.push_back(MatrixXd::Zero(nt.tensor->rows(), nt.tensor->cols()));
  }
  return s;
}

void adamw_step(std::vector<NamedTensor>& params, const std::vector<NamedTensor>& grads,
                AdamWState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    raise(ErrorCode::kShapeError, "optimizer state does not match parameters");
  }
  state.step += 1;
  const double eta = warmup_multiplier(state.step, cfg.warmup_steps);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    const MatrixXd& g = *grads[i].tensor;
    if (!g.allFinite()) raise(ErrorCode::kNumericalError, "non-finite gradient for " + grads[i].name);
    MatrixXd& m = state.m[i];
    MatrixXd& v = state.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const MatrixXd m_hat = m / bc1;
    const MatrixXd v_hat = v / bc2;
    MatrixXd& p = *params[i].tensor;
    p -= eta * (cfg.lr * m_hat.cwiseQuotient(v_hat.cwiseSqrt().array().matrix() +
                                             MatrixXd::Constant(v_hat.rows(), v_hat.cols(), cfg.eps)) +
                cfg.weight_decay * p);
  }
}

double fusion_batch_gradients(const FusionHeadParams& p, const std::vector<FusionSample>& batch,
                              bool train, uint64_t seed, FusionHeadParams& grads,
                              std::vector<MatrixXd>* alphas) {
  if (batch.empty()) raise(ErrorCode::kInvalidInput, "empty batch");
  for (auto& nt : named_tensors(grads)) nt.tensor->setZero();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    ForwardOptions opt;
    opt.train = train;
    opt.dropout_seed = derive_seed(seed, {i});
    FusionTape tape;
    const Eigen::VectorXd logits = fusion_forward(p, batch[i].spec, batch[i].wave, opt, &tape);
    loss += cross_entropy(logits, batch[i].label) * inv;
    const Eigen::VectorXd dlogits = cross_entropy_grad(logits, batch[i].label) * inv;
    fusion_backward(p, batch[i].spec, batch[i].wave, tape, dlogits, grads);
    if (alphas) alphas->push_back(tape.spec.alpha);
  }
  if (!std::isfinite(loss)) raise(ErrorCode::kNumericalError, "non-finite training loss");
  return loss;
}

double binary_batch_gradients(const BinaryHeadParams& p, const std::vector<BinarySample>& batch,
                              bool train, uint64_t seed, BinaryHeadParams& grads) {
  if (batch.empty()) raise(ErrorCode::kInvalidInput, "empty batch");
  for (auto& nt : named_tensors(grads)) nt.tensor->setZero();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    ForwardOptions opt;
    opt.train = train;
    opt.dropout_seed = derive_seed(seed, {i});
    BinaryTape tape;
    const Eigen::VectorXd logits = binary_forward(p, batch[i].wave, opt, &tape);
    loss += cross_entropy(logits, batch[i].label) * inv;
    const Eigen::VectorXd dlogits = cross_entropy_grad(logits, batch[i].label) * inv;
    binary_backward(p, batch[i].wave, tape, dlogits, grads);
  }
  if (!std::isfinite(loss)) raise(ErrorCode::kNumericalError, "non-finite training loss");
  return loss;
}

double fusion_batch_loss(const FusionHeadParams& p, const std::vector<FusionSample>& batch,
                         bool train, uint64_t seed) {
  if (batch.empty()) raise(ErrorCode::kInvalidInput, "empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    ForwardOptions opt;
    opt.train = train;
    opt.dropout_seed = derive_seed(seed, {i});
    const Eigen::VectorXd logits = fusion_forward(p, batch[i].spec, batch[i].wave, opt);
    loss += cross_entropy(logits, batch[i].label) * inv;
  }
  return loss;
}

double binary_batch_loss(const BinaryHeadParams& p, const std::vector<BinarySample>& batch,
                         bool train, uint64_t seed) {
  if (batch.empty()) raise(ErrorCode::kInvalidInput, "empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    ForwardOptions opt;
    opt.train = train;
    opt.dropout_seed = derive_seed(seed, {i});
    const Eigen::VectorXd logits = binary_forward(p, batch[i].wave, opt);
    loss += cross_entropy(logits, batch[i].label) * inv;
  }
  return loss;
}

Eigen::VectorXd mean_layer_weights(const std::vector<MatrixXd>& alphas) {
  if (alphas.empty()) raise(ErrorCode::kInvalidInput, "no attention rows");
  const Eigen::Index n_layers = alphas[0].rows();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n_layers);
  for (const MatrixXd& a : alphas) {
    if (a.rows() != n_layers) raise(ErrorCode::kShapeError, "layer count mismatch in telemetry");
    mean += a.rowwise().mean();
  }
  return mean / static_cast<double>(alphas.size());
}

namespace {

class JsonlLogger {
 public:
  explicit JsonlLogger(const std::string& path) {
    if (!path.empty()) {
      out_.open(path);
      if (!out_) raise(ErrorCode::kInvalidInput, "cannot write log " + path);
    }
  }
  void log(int64_t step, double lr, double loss, double grad_norm) {
    if (!out_.is_open()) return;
    json j;
    j["step"] = step;
    j["lr"] = lr;
    j["loss"] = loss;
    j["grad_norm"] = grad_norm;
    out_ << j.dump() << "\n";
  }

 private:
  std::ofstream out_;
};

class TelemetryWriter {
 public:
  TelemetryWriter(const std::string& path, const std::vector<uint32_t>& layer_ids) {
    if (path.empty()) return;
    out_.open(path);
    if (!out_) raise(ErrorCode::kInvalidInput, "cannot write telemetry " + path);
    out_ << "step";
    for (uint32_t id : layer_ids) out_ << ",layer_" << id;
    out_ << "\n";
  }
  void append(int64_t step, const Eigen::VectorXd& weights) {
    if (!out_.is_open()) return;
    out_ << step;
    out_ << std::setprecision(17);
    for (Eigen::Index i = 0; i < weights.size(); ++i) out_ << "," << weights(i);
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

void write_summary(const std::string& path, const json& summary) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) raise(ErrorCode::kInvalidInput, "cannot write summary " + path);
  out << summary.dump(2) << "\n";
}

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, {0xE0, static_cast<uint64_t>(epoch)}));
  rng.shuffle(order);
  return order;
}

}  // namespace

FusionTrainResult train_fusion_system(const std::vector<ManifestRecord>& train_manifest,
                                      const std::vector<ManifestRecord>& val_manifest,
                                      int d_fused, double dropout, const TrainConfig& cfg,
                                      const TrainPaths& paths,
                                      const std::string& extra_meta_json) {
  cfg.validate();
  if (train_manifest.empty()) raise(ErrorCode::kEmptySubset, "empty training manifest");
  if (val_manifest.empty()) raise(ErrorCode::kEmptySubset, "empty validation manifest");

  auto load = [](const std::vector<ManifestRecord>& manifest) {
    std::vector<FusionSample> out;
    out.reserve(manifest.size());
    for (const auto& rec : manifest) {
      FusionSample s;
      s.spec = to_dense(read_layerstack(rec.spectral_path));
      s.wave = to_dense(read_layerstack(rec.waveform_path));
      s.label = rec.class_label;
      out.push_back(std::move(s));
    }
    return out;
  };
  const std::vector<FusionSample> train_set = load(train_manifest);
  const std::vector<FusionSample> val_set = load(val_manifest);

  const int d_spec = train_set[0].spec.dim();
  const int d_wave = train_set[0].wave.dim();
  const std::vector<uint32_t> layer_ids = [&] {
    const LayerStack first = read_layerstack(train_manifest[0].spectral_path);
    return first.layer_ids;
  }();

  FusionHeadParams params =
      init_fusion_head(d_spec, d_wave, d_fused, kNumClasses, dropout, derive_seed(cfg.seed, {0x11}));
  FusionHeadParams grads = zeros_like(params);
  auto param_tensors = named_tensors(params);
  auto grad_tensors = named_tensors(grads);
  AdamWState opt_state = make_adamw_state(param_tensors);

  JsonlLogger logger(paths.log_jsonl);
  TelemetryWriter telemetry(paths.telemetry_csv, layer_ids);

  std::array<int64_t, kNumClasses> class_histogram{};
  FusionTrainResult result;
  FusionHeadParams best_params = params;
  json epochs_json = json::array();

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<size_t> order = epoch_order(train_set.size(), cfg.seed, epoch);
    double epoch_loss = 0.0;
    int64_t n_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<FusionSample> batch;
      batch.reserve(end - start);
      for (size_t k = start; k < end; ++k) {
        batch.push_back(train_set[order[k]]);
        class_histogram[static_cast<size_t>(train_set[order[k]].label)]++;
      }
      const uint64_t batch_seed = derive_seed(cfg.seed, {0xB0, static_cast<uint64_t>(epoch),
                                                         static_cast<uint64_t>(step)});
      std::vector<MatrixXd> alphas;
      const double loss =
          fusion_batch_gradients(params, batch, /*train=*/true, batch_seed, grads, &alphas);
      const double grad_norm = clip_global_norm(grad_tensors, cfg.clip_norm);
      adamw_step(param_tensors, grad_tensors, opt_state, cfg);
      ++step;
      logger.log(step, cfg.lr * warmup_multiplier(step, cfg.warmup_steps), loss, grad_norm);
      telemetry.append(step, mean_layer_weights(alphas));
      epoch_loss += loss;
      ++n_batches;
    }
    epoch_loss /= static_cast<double>(n_batches);
    result.epoch_train_loss.push_back(epoch_loss);

    // Validation pass (eval mode).
    std::vector<int> preds, labels;
    preds.reserve(val_set.size());
    labels.reserve(val_set.size());
    for (const auto& s : val_set) {
      const Eigen::VectorXd logits = fusion_forward(params, s.spec, s.wave, ForwardOptions{});
      int best = 0;
      for (int c = 1; c < kNumClasses; ++c) {
        if (logits(c) > logits(best)) best = c;
      }
      preds.push_back(best);
      labels.push_back(s.label);
    }
    const double val_f1 = macro_f1(preds, labels);
    if (val_f1 > result.best_val_macro_f1 || result.best_epoch < 0) {
      result.best_val_macro_f1 = val_f1;
      result.best_epoch = epoch;
      best_params = params;
    }
    epochs_json.push_back({{"epoch", epoch}, {"train_loss", epoch_loss}, {"val_macro_f1", val_f1}});
  }

  if (!paths.checkpoint.empty()) {
    json meta = json::parse(extra_meta_json);
    meta["best_epoch"] = result.best_epoch;
    meta["best_val_macro_f1"] = result.best_val_macro_f1;
    save_fusion_head(paths.checkpoint, best_params, meta.dump());
  }

  json summary = json::parse(extra_meta_json);
  summary["system_kind"] = "fusion";
  summary["epochs"] = epochs_json;
  summary["best_epoch"] = result.best_epoch;
  summary["best_val_macro_f1"] = result.best_val_macro_f1;
  summary["train_class_histogram"] = class_histogram;
  write_summary(paths.summary_json, summary);
  return result;
}

BinaryTrainResult train_binary_system(const std::vector<ManifestRecord>& train_manifest,
                                      const std::vector<ManifestRecord>& val_manifest,
                                      double dropout, const TrainConfig& cfg,
                                      const TrainPaths& paths,
                                      const std::string& extra_meta_json) {
  cfg.validate();
  if (val_manifest.empty()) raise(ErrorCode::kEmptySubset, "empty validation manifest");
  const std::vector<BinaryRecord> subset = select_training_subset(train_manifest);

  std::vector<BinarySample> train_set;
  std::vector<int> train_orig_class;
  train_set.reserve(subset.size());
  for (const auto& br : subset) {
    BinarySample s;
    s.wave = to_dense(read_layerstack(br.record.waveform_path));
    s.label = static_cast<int>(br.label);
    train_set.push_back(std::move(s));
    train_orig_class.push_back(br.record.class_label);
  }
  std::vector<BinarySample> val_set;
  val_set.reserve(val_manifest.size());
  for (const auto& rec : val_manifest) {
    BinarySample s;
    s.wave = to_dense(read_layerstack(rec.waveform_path));
    s.label = static_cast<int>(map_validation_labels(rec.class_label));
    val_set.push_back(std::move(s));
  }

  const int d_wave = train_set[0].wave.dim();
  BinaryHeadParams params = init_binary_head(d_wave, dropout, derive_seed(cfg.seed, {0x12}));
  BinaryHeadParams grads = zeros_like(params);
  auto param_tensors = named_tensors(params);
  auto grad_tensors = named_tensors(grads);
  AdamWState opt_state = make_adamw_state(param_tensors);

  JsonlLogger logger(paths.log_jsonl);
  std::array<int64_t, kNumClasses> class_histogram{};
  BinaryTrainResult result;
  BinaryHeadParams best_params = params;
  json epochs_json = json::array();

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<size_t> order = epoch_order(train_set.size(), cfg.seed, epoch);
    double epoch_loss = 0.0;
    int64_t n_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<BinarySample> batch;
      batch.reserve(end - start);
      for (size_t k = start; k < end; ++k) {
        batch.push_back(train_set[order[k]]);
        class_histogram[static_cast<size_t>(train_orig_class[order[k]])]++;
      }
      const uint64_t batch_seed = derive_seed(cfg.seed, {0xB1, static_cast<uint64_t>(epoch),
                                                         static_cast<uint64_t>(step)});
      const double loss = binary_batch_gradients(params, batch, /*train=*/true, batch_seed, grads);
      const double grad_norm = clip_global_norm(grad_tensors, cfg.clip_norm);
      adamw_step(param_tensors, grad_tensors, opt_state, cfg);
      ++step;
      logger.log(step, cfg.lr * warmup_multiplier(step, cfg.warmup_steps), loss, grad_norm);
      epoch_loss += loss;
      ++n_batches;
    }
    epoch_loss /= static_cast<double>(n_batches);
    result.epoch_train_loss.push_back(epoch_loss);

    std::vector<double> scores;
    std::vector<int> labels;
    int64_t correct = 0;
    for (const auto& s : val_set) {
      const Eigen::VectorXd logits = binary_forward(params, s.wave, ForwardOptions{});
      const BinaryDecision d = decide(logits, 0.5);
      scores.push_back(d.score);
      labels.push_back(s.label);
      if (static_cast<int>(d.decision) == s.label) ++correct;
    }
    double eer_threshold = 0.5;
    const double val_eer = eer(scores, labels, &eer_threshold);
    const double val_acc = static_cast<double>(correct) / static_cast<double>(val_set.size());
    // EER ties break toward the higher threshold-0.5 accuracy.
    if (result.best_epoch < 0 || val_eer < result.best_val_eer ||
        (val_eer == result.best_val_eer && val_acc > result.best_val_accuracy)) {
      result.best_val_eer = val_eer;
      result.best_val_accuracy = val_acc;
      result.best_epoch = epoch;
      result.calibrated_threshold = eer_threshold;
      best_params = params;
    }
    epochs_json.push_back({{"epoch", epoch},
                           {"train_loss", epoch_loss},
                           {"val_eer", val_eer},
                           {"val_accuracy", val_acc}});
  }

  if (!paths.checkpoint.empty()) {
    json meta = json::parse(extra_meta_json);
    meta["best_epoch"] = result.best_epoch;
    meta["best_val_eer"] = result.best_val_eer;
    meta["calibrated_threshold"] = result.calibrated_threshold;
    save_binary_head(paths.checkpoint, best_params, meta.dump());
  }

  json summary = json::parse(extra_meta_json);
  summary["system_kind"] = "binary";
  summary["epochs"] = epochs_json;
  summary["best_epoch"] = result.best_epoch;
  summary["best_val_eer"] = result.best_val_eer;
  summary["best_val_accuracy"] = result.best_val_accuracy;
  summary["calibrated_threshold"] = result.calibrated_threshold;
  summary["train_class_histogram"] = class_histogram;
  write_summary(paths.summary_json, summary);
  return result;
}

}  // namespace casdet
