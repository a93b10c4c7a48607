#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "casdet/error.hpp"
#include "casdet/head.hpp"
#include "casdet/rng.hpp"
#include "casdet/stage1.hpp"
#include "casdet/trainer.hpp"
#include "support/test_util.hpp"

using namespace casdet;
using casdet::testutil::random_dense_stack;

TEST_CASE("decide follows the threshold rule") {
  Eigen::VectorXd tie(2);
  tie << 0.0, 0.0;
  const BinaryDecision d0 = decide(tie, 0.5);
  CHECK(d0.score == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d0.decision == BinaryLabel::kMixed);  // score >= threshold

  Eigen::VectorXd sat(2);
  sat << 10.0, -10.0;
  const BinaryDecision d1 = decide(sat, 0.5);
  CHECK(d1.score < 1e-8);
  CHECK(d1.decision == BinaryLabel::kOriginal);

  Eigen::VectorXd mid(2);
  mid << -1.0, 1.0;
  const BinaryDecision d2 = decide(mid, 0.5);
  CHECK(d2.score == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
  CHECK(d2.score == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(d2.decision == BinaryLabel::kMixed);

  CHECK_THROWS_AS(decide(mid, 0.0), Error);
  CHECK_THROWS_AS(decide(mid, 1.0), Error);
  Eigen::VectorXd three(3);
  three << 1, 2, 3;
  CHECK_THROWS_AS(decide(three, 0.5), Error);
}

TEST_CASE("decide is monotone in the mixed logit") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd logits(2);
    logits << rng.normal(), rng.normal();
    const double thr = rng.uniform(0.05, 0.95);
    const BinaryDecision base = decide(logits, thr);
    Eigen::VectorXd bumped = logits;
    bumped(1) += rng.uniform(0.0, 3.0);
    const BinaryDecision more = decide(bumped, thr);
    CHECK(more.score >= base.score);
    if (base.decision == BinaryLabel::kMixed) CHECK(more.decision == BinaryLabel::kMixed);
  }
}

TEST_CASE("training subset keeps only classes 0 and 1") {
  std::vector<ManifestRecord> manifest;
  for (int c = 0; c < 5; ++c) {
    for (int i = 0; i < 10; ++i) {
      ManifestRecord r;
      r.id = "s" + std::to_string(c) + "_" + std::to_string(i);
      r.class_label = c;
      manifest.push_back(r);
    }
  }
  const auto subset = select_training_subset(manifest);
  CHECK(subset.size() == 20);
  for (const auto& br : subset) {
    CHECK(br.record.class_label <= 1);
    CHECK(br.label == (br.record.class_label == 0 ? BinaryLabel::kOriginal : BinaryLabel::kMixed));
  }

  std::vector<ManifestRecord> only2;
  ManifestRecord r;
  r.id = "x";
  r.class_label = 2;
  only2.push_back(r);
  CHECK_THROWS_AS(select_training_subset(only2), Error);
}

TEST_CASE("validation label mapping is total onto original/mixed") {
  CHECK(map_validation_labels(0) == BinaryLabel::kOriginal);
  for (int c = 1; c <= 4; ++c) CHECK(map_validation_labels(c) == BinaryLabel::kMixed);
  CHECK_THROWS_AS(map_validation_labels(-1), Error);
  CHECK_THROWS_AS(map_validation_labels(5), Error);
}

TEST_CASE("binary forward basics") {
  BinaryHeadParams p = init_binary_head(6, 0.1, 7);
  for (auto& nt : named_tensors(p)) nt.tensor->setZero();
  p.cls2_b.col(0) << 0.25, -0.75;

  Rng rng(2);
  const DenseStack wave = random_dense_stack(BranchTag::kWaveform, 1, 4, 6, rng);
  const Eigen::VectorXd logits = binary_forward(p, wave, ForwardOptions{});
  CHECK(logits(0) == 0.25);
  CHECK(logits(1) == -0.75);

  BinaryHeadParams q = init_binary_head(6, 0.1, 8);
  const Eigen::VectorXd a = binary_forward(q, wave, ForwardOptions{});
  const Eigen::VectorXd b = binary_forward(q, wave, ForwardOptions{});
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  DenseStack wrong_tag = wave;
  wrong_tag.tag = BranchTag::kSpectral;
  CHECK_THROWS_AS(binary_forward(q, wrong_tag, ForwardOptions{}), Error);
}

TEST_CASE("binary forward stays finite over random draws") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    BinaryHeadParams p = init_binary_head(5, 0.1, 900 + static_cast<uint64_t>(trial));
    const DenseStack wave = random_dense_stack(BranchTag::kWaveform, 1, 3, 5, rng, 3.0);
    CHECK(binary_forward(p, wave, ForwardOptions{}).allFinite());
  }
}

TEST_CASE("binary head analytic gradients agree with finite differences") {
  Rng rng(4);
  BinaryHeadParams p = init_binary_head(6, 0.0, 55);
  std::vector<BinarySample> batch;
  for (int i = 0; i < 3; ++i) {
    BinarySample s;
    s.wave = random_dense_stack(BranchTag::kWaveform, 1, 4, 6, rng);
    s.label = i % 2;
    batch.push_back(std::move(s));
  }
  BinaryHeadParams grads = zeros_like(p);
  binary_batch_gradients(p, batch, /*train=*/false, 0, grads);

  auto params_t = named_tensors(p);
  auto grads_t = named_tensors(grads);
  const auto rep = casdet::testutil::fd_check(
      params_t, grads_t, [&] { return binary_batch_loss(p, batch, false, 0); }, 1e-5, 4096, 256);
  CAPTURE(rep.worst_tensor);
  CHECK(rep.max_rel_err < 1e-4);
  CHECK(rep.coords_checked > 1000);
}
