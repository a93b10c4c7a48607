#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "casdet/layerstack.hpp"

namespace casdet {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Hidden width and branch embedding size are fixed by the architecture;
// the fused dimension defaults to 768 and is overridable for small tests.
constexpr int kHiddenDim = 128;
constexpr int kEmbedDim = 2 * kHiddenDim;
constexpr int kDefaultFusedDim = 768;

// Per-sample layer stack as dense double matrices (one T x D matrix per
// layer), the working representation of the heads.
struct DenseStack {
  BranchTag tag = BranchTag::kSpectral;
  std::vector<MatrixXd> layers;

  int num_layers() const { return static_cast<int>(layers.size()); }
  int frames() const { return layers.empty() ? 0 : static_cast<int>(layers[0].rows()); }
  int dim() const { return layers.empty() ? 0 : static_cast<int>(layers[0].cols()); }
};

DenseStack to_dense(const LayerStack& stack);

// FFN x2 -> temporal attention -> attentive mean/std pooling. Weights are
// stored out x in; "vector" weights are n x 1 matrices so every tensor can
// be visited uniformly.
struct FfnAspParams {
  MatrixXd ffn1_w, ffn1_b;
  MatrixXd ffn2_w, ffn2_b;
  MatrixXd attn_w, attn_b;  // kHiddenDim x 1, 1 x 1
};

struct FusionHeadParams {
  int d_spec = 0;
  int d_wave = 0;
  int d_fused = kDefaultFusedDim;
  int n_classes = 5;
  double dropout = 0.1;

  MatrixXd score_w, score_b;  // d_spec x 1, 1 x 1
  FfnAspParams spec, wave;
  MatrixXd spec_align_w, spec_align_b;  // d_fused x 256
  MatrixXd wave_align_w, wave_align_b;
  MatrixXd gate1_w, gate1_b;  // d_fused x 2*d_fused
  MatrixXd gate2_w, gate2_b;  // d_fused x d_fused
  MatrixXd cls1_w, cls1_b;    // 128 x d_fused
  MatrixXd cls2_w, cls2_b;    // n_classes x 128
};

struct BinaryHeadParams {
  int d_wave = 0;
  double dropout = 0.1;

  FfnAspParams wave;
  MatrixXd cls1_w, cls1_b;  // 128 x 256
  MatrixXd cls2_w, cls2_b;  // 2 x 128
};

// Uniform fan-in-scaled initialization, biases zero, deterministic in seed.
FusionHeadParams init_fusion_head(int d_spec, int d_wave, int d_fused, int n_classes,
                                  double dropout, uint64_t seed);
BinaryHeadParams init_binary_head(int d_wave, double dropout, uint64_t seed);

// Canonical tensor enumeration (fixed order) for optimizers, checkpoints
// and gradient checks.
struct NamedTensor {
  std::string name;
  MatrixXd* tensor;
};
std::vector<NamedTensor> named_tensors(FusionHeadParams& p);
std::vector<NamedTensor> named_tensors(BinaryHeadParams& p);

FusionHeadParams zeros_like(const FusionHeadParams& p);
BinaryHeadParams zeros_like(const BinaryHeadParams& p);

struct ForwardOptions {
  bool train = false;
  uint64_t dropout_seed = 0;
};

// Everything the backward pass needs, plus the intermediate shapes the
// architecture pins down (T x 128 -> 256 -> d_fused -> classes).
struct BranchTape {
  MatrixXd fused_input;  // T x D input to the FFN stack (post layer fusion)
  MatrixXd alpha;        // L x T layer attention (spectral branch only)
  MatrixXd score;        // L x T pre-softmax layer scores
  MatrixXd z1_pre, mask1, z1;
  MatrixXd z2_pre, mask2, z2;  // T x 128
  VectorXd attn_e, attn_a;     // T
  VectorXd mu, m2, var_raw, sd;  // 128 each
  VectorXd emb;                  // 256
  VectorXd aligned;              // d_fused (fusion head only)
};

struct FusionTape {
  BranchTape spec, wave;
  VectorXd gate_cat, gate_u_pre, gate_u, gate_v, gate_g;
  VectorXd fused;
  VectorXd c1_pre, cls_mask, c1;
  VectorXd logits;
};

struct BinaryTape {
  BranchTape wave;
  VectorXd c1_pre, cls_mask, c1;
  VectorXd logits;
};

// Layer-time fusion: alpha[l,t] = softmax_l(w . x[l,t] + b),
// H_t = sum_l alpha[l,t] x[l,t]. Returns H; writes alpha/score if given.
MatrixXd layer_time_fuse(const DenseStack& stack, const MatrixXd& score_w, double score_b,
                         MatrixXd* alpha_out = nullptr, MatrixXd* score_out = nullptr);

// Row-wise affine + ReLU (+ seeded dropout in training mode).
MatrixXd ffn_block(const MatrixXd& seq, const MatrixXd& w, const MatrixXd& b, bool train = false,
                   double dropout = 0.0, uint64_t seed = 0);

// Attentive statistics pooling of a T x 128 sequence into [mean || std].
VectorXd asp_pool(const MatrixXd& seq, const MatrixXd& attn_w, double attn_b,
                  BranchTape* tape = nullptr);

// Sigmoid-gated fusion g(.)*h_spec + (1-g(.))*h_wave.
VectorXd gate_fuse(const VectorXd& h_spec, const VectorXd& h_wave, const FusionHeadParams& p,
                   FusionTape* tape = nullptr);

VectorXd fusion_forward(const FusionHeadParams& p, const DenseStack& spec, const DenseStack& wave,
                        const ForwardOptions& opt, FusionTape* tape = nullptr);
VectorXd binary_forward(const BinaryHeadParams& p, const DenseStack& wave,
                        const ForwardOptions& opt, BinaryTape* tape = nullptr);

// Accumulates dL/dparam into grads given dL/dlogits. The tape must come
// from a forward over the same inputs and options.
void fusion_backward(const FusionHeadParams& p, const DenseStack& spec, const DenseStack& wave,
                     const FusionTape& tape, const VectorXd& dlogits, FusionHeadParams& grads);
void binary_backward(const BinaryHeadParams& p, const DenseStack& wave, const BinaryTape& tape,
                     const VectorXd& dlogits, BinaryHeadParams& grads);

// Checkpoint container: magic "CKPT", version, head kind, JSON meta block,
// then named tensor sections as little-endian f32 with explicit shapes.
enum class HeadKind : uint8_t { kFusion = 0, kBinary = 1 };

void save_fusion_head(const std::string& path, const FusionHeadParams& p,
                      const std::string& extra_meta_json = "{}");
void save_binary_head(const std::string& path, const BinaryHeadParams& p,
                      const std::string& extra_meta_json = "{}");
FusionHeadParams load_fusion_head(const std::string& path);
BinaryHeadParams load_binary_head(const std::string& path);
HeadKind peek_head_kind(const std::string& path);
std::string checkpoint_meta_json(const std::string& path);

}  // namespace casdet
