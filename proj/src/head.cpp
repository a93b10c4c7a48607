#include "casdet/head.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "casdet/error.hpp"
#include "casdet/rng.hpp"

namespace casdet {

using nlohmann::json;

DenseStack to_dense(const LayerStack& stack) {
  stack.validate();
  DenseStack out;
  out.tag = stack.branch_tag;
  out.layers.resize(stack.layers);
  for (uint32_t l = 0; l < stack.layers; ++l) {
    MatrixXd& m = out.layers[l];
    m.resize(stack.frames, stack.dim);
    for (uint32_t t = 0; t < stack.frames; ++t) {
      for (uint32_t d = 0; d < stack.dim; ++d) {
        m(t, d) = static_cast<double>(stack.at(l, t, d));
      }
    }
  }
  return out;
}

namespace {

void fill_uniform(MatrixXd& m, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = rng.uniform(-bound, bound);
    }
  }
}

void init_ffn_asp(FfnAspParams& f, int d_in, Rng& rng) {
  f.ffn1_w.setZero(kHiddenDim, d_in);
  f.ffn1_b.setZero(kHiddenDim, 1);
  f.ffn2_w.setZero(kHiddenDim, kHiddenDim);
  f.ffn2_b.setZero(kHiddenDim, 1);
  f.attn_w.setZero(kHiddenDim, 1);
  f.attn_b.setZero(1, 1);
  fill_uniform(f.ffn1_w, d_in, rng);
  fill_uniform(f.ffn2_w, kHiddenDim, rng);
  fill_uniform(f.attn_w, kHiddenDim, rng);
}

MatrixXd relu(const MatrixXd& m) { return m.cwiseMax(0.0); }

// Inverted dropout mask: entries are 1/(1-p) with probability 1-p, else 0.
MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  MatrixXd mask(rows, cols);
  const double inv = 1.0 / (1.0 - p);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      mask(r, c) = rng.uniform() < p ? 0.0 : inv;
    }
  }
  return mask;
}

struct FfnBlockOut {
  MatrixXd pre, mask, post;
};

FfnBlockOut ffn_apply(const MatrixXd& x, const MatrixXd& w, const MatrixXd& b, bool train,
                      double p, Rng& rng) {
  if (x.cols() != w.cols()) raise(ErrorCode::kShapeError, "ffn input dim mismatch");
  FfnBlockOut out;
  out.pre = (x * w.transpose()).rowwise() + b.col(0).transpose();
  MatrixXd activated = relu(out.pre);
  if (train && p > 0.0) {
    out.mask = dropout_mask(activated.rows(), activated.cols(), p, rng);
    out.post = activated.cwiseProduct(out.mask);
  } else {
    out.mask = MatrixXd::Ones(activated.rows(), activated.cols());
    out.post = std::move(activated);
  }
  return out;
}

VectorXd softmax(const VectorXd& v) {
  const double m = v.maxCoeff();
  VectorXd e = (v.array() - m).exp();
  return e / e.sum();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

MatrixXd ffn_block(const MatrixXd& seq, const MatrixXd& w, const MatrixXd& b, bool train,
                   double dropout, uint64_t seed) {
  Rng rng(seed);
  return ffn_apply(seq, w, b, train, dropout, rng).post;
}

FusionHeadParams init_fusion_head(int d_spec, int d_wave, int d_fused, int n_classes,
                                  double dropout, uint64_t seed) {
  if (d_spec < 1 || d_wave < 1 || d_fused < 1 || n_classes < 2) {
    raise(ErrorCode::kInvalidConfig, "head dimensions must be positive");
  }
  FusionHeadParams p;
  p.d_spec = d_spec;
  p.d_wave = d_wave;
  p.d_fused = d_fused;
  p.n_classes = n_classes;
  p.dropout = dropout;

  Rng rng(seed);
  p.score_w.setZero(d_spec, 1);
  p.score_b.setZero(1, 1);
  fill_uniform(p.score_w, d_spec, rng);
  init_ffn_asp(p.spec, d_spec, rng);
  init_ffn_asp(p.wave, d_wave, rng);
  p.spec_align_w.setZero(d_fused, kEmbedDim);
  p.spec_align_b.setZero(d_fused, 1);
  p.wave_align_w.setZero(d_fused, kEmbedDim);
  p.wave_align_b.setZero(d_fused, 1);
  fill_uniform(p.spec_align_w, kEmbedDim, rng);
  fill_uniform(p.wave_align_w, kEmbedDim, rng);
  p.gate1_w.setZero(d_fused, 2 * d_fused);
  p.gate1_b.setZero(d_fused, 1);
  p.gate2_w.setZero(d_fused, d_fused);
  p.gate2_b.setZero(d_fused, 1);
  fill_uniform(p.gate1_w, 2 * d_fused, rng);
  fill_uniform(p.gate2_w, d_fused, rng);
  p.cls1_w.setZero(kHiddenDim, d_fused);
  p.cls1_b.setZero(kHiddenDim, 1);
  p.cls2_w.setZero(n_classes, kHiddenDim);
  p.cls2_b.setZero(n_classes, 1);
  fill_uniform(p.cls1_w, d_fused, rng);
  fill_uniform(p.cls2_w, kHiddenDim, rng);
  return p;
}

BinaryHeadParams init_binary_head(int d_wave, double dropout, uint64_t seed) {
  if (d_wave < 1) raise(ErrorCode::kInvalidConfig, "head dimensions must be positive");
  BinaryHeadParams p;
  p.d_wave = d_wave;
  p.dropout = dropout;
  Rng rng(seed);
  init_ffn_asp(p.wave, d_wave, rng);
  p.cls1_w.setZero(kHiddenDim, kEmbedDim);
  p.cls1_b.setZero(kHiddenDim, 1);
  p.cls2_w.setZero(2, kHiddenDim);
  p.cls2_b.setZero(2, 1);
  fill_uniform(p.cls1_w, kEmbedDim, rng);
  fill_uniform(p.cls2_w, kHiddenDim, rng);
  return p;
}

namespace {

void append_ffn_asp(std::vector<NamedTensor>& v, const std::string& prefix, FfnAspParams& f) {
  v.push_back({prefix + ".ffn1_w", &f.ffn1_w});
  v.push_back({prefix + ".ffn1_b", &f.ffn1_b});
  v.push_back({prefix + ".ffn2_w", &f.ffn2_w});
  v.push_back({prefix + ".ffn2_b", &f.ffn2_b});
  v.push_back({prefix + ".attn_w", &f.attn_w});
  v.push_back({prefix + ".attn_b", &f.attn_b});
}

}  // namespace

std::vector<NamedTensor> named_tensors(FusionHeadParams& p) {
  std::vector<NamedTensor> v;
  v.push_back({"fusion.score_w", &p.score_w});
  v.push_back({"fusion.score_b", &p.score_b});
  append_ffn_asp(v, "spec", p.spec);
  v.push_back({"spec.align_w", &p.spec_align_w});
  v.push_back({"spec.align_b", &p.spec_align_b});
  append_ffn_asp(v, "wave", p.wave);
  v.push_back({"wave.align_w", &p.wave_align_w});
  v.push_back({"wave.align_b", &p.wave_align_b});
  v.push_back({"gate.g1_w", &p.gate1_w});
  v.push_back({"gate.g1_b", &p.gate1_b});
  v.push_back({"gate.g2_w", &p.gate2_w});
  v.push_back({"gate.g2_b", &p.gate2_b});
  v.push_back({"cls.c1_w", &p.cls1_w});
  v.push_back({"cls.c1_b", &p.cls1_b});
  v.push_back({"cls.c2_w", &p.cls2_w});
  v.push_back({"cls.c2_b", &p.cls2_b});
  return v;
}

std::vector<NamedTensor> named_tensors(BinaryHeadParams& p) {
  std::vector<NamedTensor> v;
  append_ffn_asp(v, "wave", p.wave);
  v.push_back({"cls.c1_w", &p.cls1_w});
  v.push_back({"cls.c1_b", &p.cls1_b});
  v.push_back({"cls.c2_w", &p.cls2_w});
  v.push_back({"cls.c2_b", &p.cls2_b});
  return v;
}

FusionHeadParams zeros_like(const FusionHeadParams& p) {
  FusionHeadParams z = p;
  for (auto& nt : named_tensors(z)) nt.tensor->setZero();
  return z;
}

BinaryHeadParams zeros_like(const BinaryHeadParams& p) {
  BinaryHeadParams z = p;
  for (auto& nt : named_tensors(z)) nt.tensor->setZero();
  return z;
}

MatrixXd layer_time_fuse(const DenseStack& stack, const MatrixXd& score_w, double score_b,
                         MatrixXd* alpha_out, MatrixXd* score_out) {
  const int n_layers = stack.num_layers();
  if (n_layers < 1) raise(ErrorCode::kShapeError, "empty stack");
  const int frames = stack.frames();
  const int dim = stack.dim();
  if (score_w.rows() != dim || score_w.cols() != 1) {
    raise(ErrorCode::kShapeError, "score weight does not match stack dim");
  }

  MatrixXd score(n_layers, frames);
  for (int l = 0; l < n_layers; ++l) {
    score.row(l) = (stack.layers[static_cast<size_t>(l)] * score_w).transpose().array() + score_b;
  }

  MatrixXd alpha(n_layers, frames);
  for (int t = 0; t < frames; ++t) {
    alpha.col(t) = softmax(score.col(t));
  }

  MatrixXd fused = MatrixXd::Zero(frames, dim);
  for (int l = 0; l < n_layers; ++l) {
    fused.array() +=
        stack.layers[static_cast<size_t>(l)].array().colwise() * alpha.row(l).transpose().array();
  }
  if (alpha_out) *alpha_out = std::move(alpha);
  if (score_out) *score_out = std::move(score);
  return fused;
}

VectorXd asp_pool(const MatrixXd& seq, const MatrixXd& attn_w, double attn_b, BranchTape* tape) {
  if (seq.rows() < 1) raise(ErrorCode::kShapeError, "asp_pool needs T >= 1");
  if (attn_w.rows() != seq.cols() || attn_w.cols() != 1) {
    raise(ErrorCode::kShapeError, "attention weight does not match sequence dim");
  }
  const VectorXd e = (seq * attn_w).col(0).array() + attn_b;
  const VectorXd a = softmax(e);
  const VectorXd mu = seq.transpose() * a;
  const VectorXd m2 = seq.array().square().matrix().transpose() * a;
  const VectorXd var_raw = m2 - mu.array().square().matrix();
  const VectorXd sd = (var_raw.cwiseMax(0.0).array() + 1e-9).sqrt();

  VectorXd emb(2 * seq.cols());
  emb << mu, sd;
  if (tape) {
    tape->attn_e = e;
    tape->attn_a = a;
    tape->mu = mu;
    tape->m2 = m2;
    tape->var_raw = var_raw;
    tape->sd = sd;
    tape->emb = emb;
  }
  return emb;
}

VectorXd gate_fuse(const VectorXd& h_spec, const VectorXd& h_wave, const FusionHeadParams& p,
                   FusionTape* tape) {
  if (h_spec.size() != p.d_fused || h_wave.size() != p.d_fused) {
    raise(ErrorCode::kShapeError, "gate inputs must match fused dim");
  }
  VectorXd cat(2 * p.d_fused);
  cat << h_spec, h_wave;
  const VectorXd u_pre = p.gate1_w * cat + p.gate1_b.col(0);
  const VectorXd u = u_pre.cwiseMax(0.0);
  const VectorXd v = p.gate2_w * u + p.gate2_b.col(0);
  VectorXd g(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) g(i) = sigmoid(v(i));
  const VectorXd fused =
      g.cwiseProduct(h_spec) + (VectorXd::Ones(g.size()) - g).cwiseProduct(h_wave);
  if (tape) {
    tape->gate_cat = cat;
    tape->gate_u_pre = u_pre;
    tape->gate_u = u;
    tape->gate_v = v;
    tape->gate_g = g;
    tape->fused = fused;
  }
  return fused;
}

namespace {

// Shared per-branch pipeline: (optional fusion already applied) input
// sequence -> FFN x2 -> ASP embedding.
VectorXd branch_pipeline(const MatrixXd& input, const FfnAspParams& f, bool train, double p,
                         Rng& rng, BranchTape* tape) {
  FfnBlockOut b1 = ffn_apply(input, f.ffn1_w, f.ffn1_b, train, p, rng);
  FfnBlockOut b2 = ffn_apply(b1.post, f.ffn2_w, f.ffn2_b, train, p, rng);
  BranchTape local;
  BranchTape* bt = tape ? tape : &local;
  const VectorXd emb = asp_pool(b2.post, f.attn_w, f.attn_b(0, 0), bt);
  if (tape) {
    tape->fused_input = input;
    tape->z1_pre = std::move(b1.pre);
    tape->mask1 = std::move(b1.mask);
    tape->z1 = std::move(b1.post);
    tape->z2_pre = std::move(b2.pre);
    tape->mask2 = std::move(b2.mask);
    tape->z2 = std::move(b2.post);
  }
  return emb;
}

void check_branch_input(const DenseStack& stack, BranchTag expected, int expected_dim,
                        const char* what) {
  if (stack.tag != expected) {
    raise(ErrorCode::kInvalidInput, std::string(what) + ": wrong branch tag");
  }
  if (stack.num_layers() < 1 || stack.frames() < 1) {
    raise(ErrorCode::kShapeError, std::string(what) + ": empty stack");
  }
  if (stack.dim() != expected_dim) {
    raise(ErrorCode::kShapeError, std::string(what) + ": dim mismatch");
  }
}

}  // namespace

VectorXd fusion_forward(const FusionHeadParams& p, const DenseStack& spec, const DenseStack& wave,
                        const ForwardOptions& opt, FusionTape* tape) {
  check_branch_input(spec, BranchTag::kSpectral, p.d_spec, "spectral input");
  check_branch_input(wave, BranchTag::kWaveform, p.d_wave, "waveform input");
  if (wave.num_layers() != 1) raise(ErrorCode::kShapeError, "waveform input must be single-layer");

  Rng rng(opt.dropout_seed);
  FusionTape local;
  FusionTape* ft = tape ? tape : &local;

  const MatrixXd fused_seq =
      layer_time_fuse(spec, p.score_w, p.score_b(0, 0), &ft->spec.alpha, &ft->spec.score);
  const VectorXd spec_emb = branch_pipeline(fused_seq, p.spec, opt.train, p.dropout, rng, &ft->spec);
  const VectorXd wave_emb =
      branch_pipeline(wave.layers[0], p.wave, opt.train, p.dropout, rng, &ft->wave);

  const VectorXd h_spec = p.spec_align_w * spec_emb + p.spec_align_b.col(0);
  const VectorXd h_wave = p.wave_align_w * wave_emb + p.wave_align_b.col(0);
  ft->spec.aligned = h_spec;
  ft->wave.aligned = h_wave;

  const VectorXd fused = gate_fuse(h_spec, h_wave, p, ft);

  ft->c1_pre = p.cls1_w * fused + p.cls1_b.col(0);
  VectorXd c1 = ft->c1_pre.cwiseMax(0.0);
  if (opt.train && p.dropout > 0.0) {
    ft->cls_mask = dropout_mask(c1.size(), 1, p.dropout, rng).col(0);
    c1 = c1.cwiseProduct(ft->cls_mask);
  } else {
    ft->cls_mask = VectorXd::Ones(c1.size());
  }
  ft->c1 = c1;
  ft->logits = p.cls2_w * c1 + p.cls2_b.col(0);
  return ft->logits;
}

VectorXd binary_forward(const BinaryHeadParams& p, const DenseStack& wave,
                        const ForwardOptions& opt, BinaryTape* tape) {
  check_branch_input(wave, BranchTag::kWaveform, p.d_wave, "waveform input");
  if (wave.num_layers() != 1) raise(ErrorCode::kShapeError, "waveform input must be single-layer");

  Rng rng(opt.dropout_seed);
  BinaryTape local;
  BinaryTape* bt = tape ? tape : &local;

  const VectorXd emb =
      branch_pipeline(wave.layers[0], p.wave, opt.train, p.dropout, rng, &bt->wave);

  bt->c1_pre = p.cls1_w * emb + p.cls1_b.col(0);
  VectorXd c1 = bt->c1_pre.cwiseMax(0.0);
  if (opt.train && p.dropout > 0.0) {
    bt->cls_mask = dropout_mask(c1.size(), 1, p.dropout, rng).col(0);
    c1 = c1.cwiseProduct(bt->cls_mask);
  } else {
    bt->cls_mask = VectorXd::Ones(c1.size());
  }
  bt->c1 = c1;
  bt->logits = p.cls2_w * c1 + p.cls2_b.col(0);
  return bt->logits;
}

namespace {

// ASP + FFN stack backward. Returns the gradient w.r.t. the branch input
// sequence (needed by the spectral fusion backward).
MatrixXd branch_backward(const FfnAspParams& f, const BranchTape& t, const VectorXd& demb,
                         FfnAspParams& g) {
  const Eigen::Index h = t.mu.size();
  const VectorXd dmu_in = demb.head(h);
  const VectorXd dsd = demb.tail(h);

  // std = sqrt(max(var,0) + eps); clamp blocks the gradient when engaged.
  VectorXd dvar(h);
  for (Eigen::Index k = 0; k < h; ++k) {
    dvar(k) = t.var_raw(k) > 0.0 ? dsd(k) * 0.5 / t.sd(k) : 0.0;
  }
  const VectorXd dm2 = dvar;
  const VectorXd dmu = dmu_in - 2.0 * t.mu.cwiseProduct(dvar);

  const MatrixXd& z = t.z2;
  const VectorXd& a = t.attn_a;
  MatrixXd dz = a * dmu.transpose() + 2.0 * (a * dm2.transpose()).cwiseProduct(z);
  const VectorXd da = z * dmu + z.array().square().matrix() * dm2;
  const VectorXd de = a.cwiseProduct(da.array().matrix() -
                                     VectorXd::Constant(a.size(), a.dot(da)));
  g.attn_w.col(0) += z.transpose() * de;
  g.attn_b(0, 0) += de.sum();
  dz += de * f.attn_w.col(0).transpose();

  // FFN2
  MatrixXd dz2_pre =
      dz.cwiseProduct(t.mask2).cwiseProduct((t.z2_pre.array() > 0.0).cast<double>().matrix());
  g.ffn2_w += dz2_pre.transpose() * t.z1;
  g.ffn2_b.col(0) += dz2_pre.colwise().sum().transpose();
  MatrixXd dz1 = dz2_pre * f.ffn2_w;

  // FFN1
  MatrixXd dz1_pre =
      dz1.cwiseProduct(t.mask1).cwiseProduct((t.z1_pre.array() > 0.0).cast<double>().matrix());
  g.ffn1_w += dz1_pre.transpose() * t.fused_input;
  g.ffn1_b.col(0) += dz1_pre.colwise().sum().transpose();
  return dz1_pre * f.ffn1_w;
}

void fuse_backward(const DenseStack& stack, const BranchTape& t, const MatrixXd& dfused,
                   MatrixXd& dscore_w, MatrixXd& dscore_b) {
  const int n_layers = stack.num_layers();
  const int frames = stack.frames();

  MatrixXd dalpha(n_layers, frames);
  for (int l = 0; l < n_layers; ++l) {
    dalpha.row(l) =
        dfused.cwiseProduct(stack.layers[static_cast<size_t>(l)]).rowwise().sum().transpose();
  }
  MatrixXd dscore(n_layers, frames);
  for (int c = 0; c < frames; ++c) {
    const VectorXd& acol = t.alpha.col(c);
    const VectorXd& dacol = dalpha.col(c);
    dscore.col(c) = acol.cwiseProduct(dacol.array().matrix() -
                                      VectorXd::Constant(acol.size(), acol.dot(dacol)));
  }
  for (int l = 0; l < n_layers; ++l) {
    dscore_w.col(0) +=
        stack.layers[static_cast<size_t>(l)].transpose() * dscore.row(l).transpose();
  }
  dscore_b(0, 0) += dscore.sum();
}

// Classifier (dense -> 128 -> logits) backward shared by both heads.
VectorXd classifier_backward(const MatrixXd& cls1_w, const MatrixXd& cls2_w, const VectorXd& input,
                             const VectorXd& c1_pre, const VectorXd& cls_mask, const VectorXd& c1,
                             const VectorXd& dlogits, MatrixXd& g_cls1_w, MatrixXd& g_cls1_b,
                             MatrixXd& g_cls2_w, MatrixXd& g_cls2_b) {
  g_cls2_w += dlogits * c1.transpose();
  g_cls2_b.col(0) += dlogits;
  VectorXd dc1 = cls2_w.transpose() * dlogits;
  VectorXd dc1_pre = dc1.cwiseProduct(cls_mask)
                         .cwiseProduct((c1_pre.array() > 0.0).cast<double>().matrix());
  g_cls1_w += dc1_pre * input.transpose();
  g_cls1_b.col(0) += dc1_pre;
  return cls1_w.transpose() * dc1_pre;
}

}  // namespace

void fusion_backward(const FusionHeadParams& p, const DenseStack& spec, const DenseStack& wave,
                     const FusionTape& tape, const VectorXd& dlogits, FusionHeadParams& grads) {
  const VectorXd dfused =
      classifier_backward(p.cls1_w, p.cls2_w, tape.fused, tape.c1_pre, tape.cls_mask, tape.c1,
                          dlogits, grads.cls1_w, grads.cls1_b, grads.cls2_w, grads.cls2_b);

  // Gate.
  const VectorXd& g = tape.gate_g;
  const VectorXd dg = dfused.cwiseProduct(tape.spec.aligned - tape.wave.aligned);
  VectorXd dh_spec = dfused.cwiseProduct(g);
  VectorXd dh_wave = dfused.cwiseProduct(VectorXd::Ones(g.size()) - g);
  const VectorXd dv = dg.cwiseProduct(g).cwiseProduct(VectorXd::Ones(g.size()) - g);
  grads.gate2_w += dv * tape.gate_u.transpose();
  grads.gate2_b.col(0) += dv;
  VectorXd du = p.gate2_w.transpose() * dv;
  VectorXd du_pre =
      du.cwiseProduct((tape.gate_u_pre.array() > 0.0).cast<double>().matrix());
  grads.gate1_w += du_pre * tape.gate_cat.transpose();
  grads.gate1_b.col(0) += du_pre;
  const VectorXd dcat = p.gate1_w.transpose() * du_pre;
  dh_spec += dcat.head(p.d_fused);
  dh_wave += dcat.tail(p.d_fused);

  // Branch alignment.
  grads.spec_align_w += dh_spec * tape.spec.emb.transpose();
  grads.spec_align_b.col(0) += dh_spec;
  const VectorXd demb_spec = p.spec_align_w.transpose() * dh_spec;
  grads.wave_align_w += dh_wave * tape.wave.emb.transpose();
  grads.wave_align_b.col(0) += dh_wave;
  const VectorXd demb_wave = p.wave_align_w.transpose() * dh_wave;

  const MatrixXd dfused_seq = branch_backward(p.spec, tape.spec, demb_spec, grads.spec);
  branch_backward(p.wave, tape.wave, demb_wave, grads.wave);

  fuse_backward(spec, tape.spec, dfused_seq, grads.score_w, grads.score_b);
  (void)wave;
}

void binary_backward(const BinaryHeadParams& p, const DenseStack& wave, const BinaryTape& tape,
                     const VectorXd& dlogits, BinaryHeadParams& grads) {
  const VectorXd demb =
      classifier_backward(p.cls1_w, p.cls2_w, tape.wave.emb, tape.c1_pre, tape.cls_mask, tape.c1,
                          dlogits, grads.cls1_w, grads.cls1_b, grads.cls2_w, grads.cls2_b);
  branch_backward(p.wave, tape.wave, demb, grads.wave);
  (void)wave;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

constexpr uint16_t kCkptVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<char*>(b), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  in.read(reinterpret_cast<char*>(b), sizeof(T));
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const MatrixXd& m) {
  write_le<uint16_t>(out, static_cast<uint16_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_le<uint8_t>(out, 2);
  write_le<uint32_t>(out, static_cast<uint32_t>(m.rows()));
  write_le<uint32_t>(out, static_cast<uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float f = static_cast<float>(m(r, c));
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      write_le<uint32_t>(out, bits);
    }
  }
}

void save_head(const std::string& path, HeadKind kind, const json& meta,
               const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::kCorruptFile, "cannot write " + path);
  out.write("CKPT", 4);
  write_le<uint16_t>(out, kCkptVersion);
  write_le<uint8_t>(out, static_cast<uint8_t>(kind));
  const std::string meta_str = meta.dump();
  write_le<uint32_t>(out, static_cast<uint32_t>(meta_str.size()));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  write_le<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& nt : tensors) write_tensor(out, nt.name, *nt.tensor);
  if (!out) raise(ErrorCode::kCorruptFile, "write failed: " + path);
}

struct CkptHeader {
  HeadKind kind;
  json meta;
  uint32_t n_tensors;
};

CkptHeader read_header(std::istream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CKPT", 4) != 0) {
    raise(ErrorCode::kCorruptFile, "bad checkpoint magic in " + path);
  }
  const uint16_t version = read_le<uint16_t>(in);
  if (version != kCkptVersion) raise(ErrorCode::kCorruptFile, "unsupported checkpoint version");
  const uint8_t kind = read_le<uint8_t>(in);
  if (kind > 1) raise(ErrorCode::kCorruptFile, "bad head kind in " + path);
  const uint32_t meta_len = read_le<uint32_t>(in);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), meta_len);
  if (!in) raise(ErrorCode::kCorruptFile, "truncated checkpoint meta in " + path);
  json meta = json::parse(meta_str, nullptr, false);
  if (meta.is_discarded()) raise(ErrorCode::kCorruptFile, "bad checkpoint meta in " + path);
  const uint32_t n_tensors = read_le<uint32_t>(in);
  if (!in) raise(ErrorCode::kCorruptFile, "truncated checkpoint in " + path);
  return {static_cast<HeadKind>(kind), std::move(meta), n_tensors};
}

void read_tensors(std::istream& in, const std::string& path, uint32_t count,
                  std::vector<NamedTensor>& expected) {
  std::vector<bool> seen(expected.size(), false);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = read_le<uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint8_t rank = read_le<uint8_t>(in);
    if (!in || rank != 2) raise(ErrorCode::kCorruptFile, "bad tensor header in " + path);
    const uint32_t rows = read_le<uint32_t>(in);
    const uint32_t cols = read_le<uint32_t>(in);
    MatrixXd* target = nullptr;
    for (size_t j = 0; j < expected.size(); ++j) {
      if (expected[j].name == name) {
        if (seen[j]) raise(ErrorCode::kCorruptFile, "duplicate tensor " + name + " in " + path);
        seen[j] = true;
        target = expected[j].tensor;
        break;
      }
    }
    if (!target) raise(ErrorCode::kCorruptFile, "unexpected tensor " + name + " in " + path);
    if (target->rows() != static_cast<Eigen::Index>(rows) ||
        target->cols() != static_cast<Eigen::Index>(cols)) {
      raise(ErrorCode::kCorruptFile, "shape mismatch for tensor " + name + " in " + path);
    }
    for (uint32_t r = 0; r < rows; ++r) {
      for (uint32_t c = 0; c < cols; ++c) {
        const uint32_t bits = read_le<uint32_t>(in);
        float f;
        std::memcpy(&f, &bits, 4);
        (*target)(r, c) = static_cast<double>(f);
      }
    }
    if (!in) raise(ErrorCode::kCorruptFile, "truncated tensor " + name + " in " + path);
  }
  for (size_t j = 0; j < expected.size(); ++j) {
    if (!seen[j]) raise(ErrorCode::kCorruptFile, "missing tensor " + expected[j].name + " in " + path);
  }
}

}  // namespace

void save_fusion_head(const std::string& path, const FusionHeadParams& p,
                      const std::string& extra_meta_json) {
  json meta = json::parse(extra_meta_json);
  meta["kind"] = "fusion";
  meta["d_spec"] = p.d_spec;
  meta["d_wave"] = p.d_wave;
  meta["d_fused"] = p.d_fused;
  meta["n_classes"] = p.n_classes;
  meta["dropout"] = p.dropout;
  auto tensors = named_tensors(const_cast<FusionHeadParams&>(p));
  save_head(path, HeadKind::kFusion, meta, tensors);
}

void save_binary_head(const std::string& path, const BinaryHeadParams& p,
                      const std::string& extra_meta_json) {
  json meta = json::parse(extra_meta_json);
  meta["kind"] = "binary";
  meta["d_wave"] = p.d_wave;
  meta["dropout"] = p.dropout;
  auto tensors = named_tensors(const_cast<BinaryHeadParams&>(p));
  save_head(path, HeadKind::kBinary, meta, tensors);
}

FusionHeadParams load_fusion_head(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::kMissingModel, "cannot open checkpoint " + path);
  CkptHeader h = read_header(in, path);
  if (h.kind != HeadKind::kFusion) raise(ErrorCode::kCorruptFile, "not a fusion head: " + path);
  FusionHeadParams p = init_fusion_head(h.meta.at("d_spec").get<int>(),
                                        h.meta.at("d_wave").get<int>(),
                                        h.meta.at("d_fused").get<int>(),
                                        h.meta.at("n_classes").get<int>(),
                                        h.meta.at("dropout").get<double>(), 0);
  auto tensors = named_tensors(p);
  read_tensors(in, path, h.n_tensors, tensors);
  return p;
}

BinaryHeadParams load_binary_head(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::kMissingModel, "cannot open checkpoint " + path);
  CkptHeader h = read_header(in, path);
  if (h.kind != HeadKind::kBinary) raise(ErrorCode::kCorruptFile, "not a binary head: " + path);
  BinaryHeadParams p = init_binary_head(h.meta.at("d_wave").get<int>(),
                                        h.meta.at("dropout").get<double>(), 0);
  auto tensors = named_tensors(p);
  read_tensors(in, path, h.n_tensors, tensors);
  return p;
}

HeadKind peek_head_kind(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::kMissingModel, "cannot open checkpoint " + path);
  CkptHeader h = read_header(in, path);
  return h.kind;
}

std::string checkpoint_meta_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::kMissingModel, "cannot open checkpoint " + path);
  CkptHeader h = read_header(in, path);
  return h.meta.dump();
}

}  // namespace casdet
