#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "casdet/cascade.hpp"
#include "casdet/error.hpp"
#include "casdet/head.hpp"
#include "casdet/layerstack.hpp"
#include "casdet/rng.hpp"

using namespace casdet;
namespace fs = std::filesystem;

namespace {

Eigen::VectorXd logits5(std::initializer_list<double> v) {
  Eigen::VectorXd out(5);
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

BinaryDecision mixed_decision() {
  BinaryDecision d;
  d.score = 0.9;
  d.decision = BinaryLabel::kMixed;
  return d;
}

BinaryDecision original_decision() {
  BinaryDecision d;
  d.score = 0.1;
  d.decision = BinaryLabel::kOriginal;
  return d;
}

}  // namespace

TEST_CASE("ensemble mean arithmetic") {
  const Eigen::VectorXd b1 = logits5({0, 2, 0, 0, 0});
  const Eigen::VectorXd b2 = logits5({2, 0, 0, 0, 0});
  const Eigen::VectorXd mean = ensemble_mean(b1, b2);
  CHECK(mean(0) == 1.0);
  CHECK(mean(1) == 1.0);

  CHECK((ensemble_mean(b1, b1) - b1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ensemble_mean(b1, b2) - ensemble_mean(b2, b1)).cwiseAbs().maxCoeff() == 0.0);

  // mean argmax can disagree with both members
  const Eigen::VectorXd m = ensemble_mean(logits5({3, 0, 2.9, 0, 0}), logits5({0, 3, 2.9, 0, 0}));
  int best = 0;
  for (int i = 1; i < 5; ++i) {
    if (m(i) > m(best)) best = i;
  }
  CHECK(best == 2);
}

TEST_CASE("calibrate follows the three rules") {
  const CascadeDecision forced = calibrate(original_decision(), logits5({0, 9, 9, 9, 9}));
  CHECK(forced.final_class == 0);
  CHECK(forced.forced_original);
  CHECK_FALSE(forced.overridden_second_best);

  const CascadeDecision overridden = calibrate(mixed_decision(), logits5({5, 1, 2, 4, 3}));
  CHECK(overridden.final_class == 3);
  CHECK(overridden.overridden_second_best);
  CHECK_FALSE(overridden.forced_original);

  const CascadeDecision direct = calibrate(mixed_decision(), logits5({0, 0, 7, 0, 0}));
  CHECK(direct.final_class == 2);
  CHECK_FALSE(direct.forced_original);
  CHECK_FALSE(direct.overridden_second_best);
}

TEST_CASE("calibrate truth table over all orderings") {
  std::array<double, 5> values = {1.0, 2.0, 3.0, 4.0, 5.0};
  std::sort(values.begin(), values.end());
  do {
    Eigen::VectorXd ens(5);
    for (int i = 0; i < 5; ++i) ens(i) = values[static_cast<size_t>(i)];
    int top = 0, second = 1;
    for (int i = 1; i < 5; ++i) {
      if (ens(i) > ens(top)) top = i;
    }
    second = top == 0 ? 1 : 0;
    for (int i = 1; i < 5; ++i) {
      if (i != top && ens(i) > ens(second)) second = i;
    }

    const CascadeDecision f = calibrate(original_decision(), ens);
    CHECK(f.final_class == 0);
    CHECK(f.forced_original);

    const CascadeDecision m = calibrate(mixed_decision(), ens);
    CHECK(m.final_class != 0);
    if (top != 0) {
      CHECK(m.final_class == top);
      CHECK_FALSE(m.overridden_second_best);
    } else {
      CHECK(m.final_class == second);
      CHECK(m.overridden_second_best);
    }
    CHECK_FALSE((m.forced_original && m.overridden_second_best));

    // shift invariance
    const CascadeDecision shifted = calibrate(mixed_decision(), ens.array() + 3.7);
    CHECK(shifted.final_class == m.final_class);
    CHECK(shifted.overridden_second_best == m.overridden_second_best);
  } while (std::next_permutation(values.begin(), values.end()));
}

TEST_CASE("calibrate breaks ties toward the lowest class index") {
  const CascadeDecision tie = calibrate(mixed_decision(), logits5({1, 3, 3, 3, 0}));
  CHECK(tie.final_class == 1);
  const CascadeDecision zero_tie = calibrate(mixed_decision(), logits5({3, 3, 1, 0, 0}));
  // argmax ties 0 vs 1 resolve to 0, which then overrides to the best non-zero
  CHECK(zero_tie.final_class == 1);
  CHECK(zero_tie.overridden_second_best);
}

TEST_CASE("prediction files round trip") {
  std::vector<PredictionRecord> recs(2);
  recs[0].id = "a";
  recs[0].final_class = 3;
  recs[0].ensemble_logits = {1, 2, 3, 4, 5};
  recs[0].stage1_score = 0.75;
  recs[0].overridden_second_best = true;
  recs[1].id = "b";
  recs[1].final_class = 0;
  recs[1].ensemble_logits = {5, 4, 3, 2, 1};
  recs[1].probs = {{0.6, 0.1, 0.1, 0.1, 0.1}};

  write_predictions("preds.jsonl", recs);
  const auto back = read_predictions("preds.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a");
  CHECK(back[0].final_class == 3);
  CHECK(back[0].stage1_score.has_value());
  CHECK(*back[0].stage1_score == 0.75);
  CHECK(back[0].overridden_second_best);
  CHECK_FALSE(back[0].probs.has_value());
  CHECK(back[1].probs.has_value());
  CHECK((*back[1].probs)[0] == 0.6);
  std::remove("preds.jsonl");
}

namespace {

struct TinyDataset {
  fs::path dir;
  std::vector<ManifestRecord> man_a, man_b1, man_b2;
  std::string ckpt_a, ckpt_b1, ckpt_b2;
};

TinyDataset make_tiny_dataset() {
  TinyDataset d;
  d.dir = fs::temp_directory_path() / "casdet_cascade_test";
  fs::remove_all(d.dir);
  fs::create_directories(d.dir);

  SynthProfile profile;
  profile.spectral.frames = 4;
  profile.spectral.dim = 8;
  profile.waveform.frames = 4;
  profile.waveform.dim = 8;

  for (int c = 0; c < 5; ++c) {
    const auto [spec, wave] = synth_sample(profile, c, 100 + static_cast<uint64_t>(c));
    ManifestRecord rec;
    rec.id = "s" + std::to_string(c);
    rec.class_label = c;
    rec.waveform_path = (d.dir / (rec.id + "_w.lstk")).string();
    rec.spectral_path = (d.dir / (rec.id + "_s.lstk")).string();
    write_layerstack(rec.waveform_path, wave);
    write_layerstack(rec.spectral_path, spec);
    d.man_b1.push_back(rec);
    d.man_b2.push_back(rec);
    rec.spectral_path.clear();
    d.man_a.push_back(rec);
  }

  d.ckpt_a = (d.dir / "a.ckpt").string();
  d.ckpt_b1 = (d.dir / "b1.ckpt").string();
  d.ckpt_b2 = (d.dir / "b2.ckpt").string();
  save_binary_head(d.ckpt_a, init_binary_head(8, 0.1, 41));
  save_fusion_head(d.ckpt_b1, init_fusion_head(8, 8, 16, 5, 0.1, 42));
  save_fusion_head(d.ckpt_b2, init_fusion_head(8, 8, 16, 5, 0.1, 43));
  return d;
}

}  // namespace

TEST_CASE("infer_batch produces consistent records per mode") {
  const TinyDataset d = make_tiny_dataset();

  const auto cascade = infer_batch(InferMode::kCascade, d.man_a, d.man_b1, d.man_b2, d.ckpt_a,
                                   d.ckpt_b1, d.ckpt_b2, 0.5);
  REQUIRE(cascade.size() == 5);
  for (const auto& r : cascade) {
    REQUIRE(r.stage1_score.has_value());
    CHECK_FALSE(r.probs.has_value());
    if (*r.stage1_score >= 0.5) {
      CHECK(r.final_class != 0);
      CHECK_FALSE(r.forced_original);
    } else {
      CHECK(r.final_class == 0);
      CHECK(r.forced_original);
    }
    CHECK_FALSE((r.forced_original && r.overridden_second_best));
  }

  const auto b1_only =
      infer_batch(InferMode::kB1, {}, d.man_b1, {}, "", d.ckpt_b1, "", 0.5);
  REQUIRE(b1_only.size() == 5);
  for (const auto& r : b1_only) {
    CHECK(r.probs.has_value());
    CHECK_FALSE(r.stage1_score.has_value());
  }

  // mean of identical checkpoints equals the single system
  const auto b1b1 =
      infer_batch(InferMode::kB1B2, {}, d.man_b1, d.man_b2, "", d.ckpt_b1, d.ckpt_b1, 0.5);
  for (size_t i = 0; i < b1b1.size(); ++i) {
    CHECK(b1b1[i].final_class == b1_only[i].final_class);
    for (int c = 0; c < 5; ++c) {
      CHECK(b1b1[i].ensemble_logits[static_cast<size_t>(c)] ==
            doctest::Approx(b1_only[i].ensemble_logits[static_cast<size_t>(c)]).epsilon(1e-12));
    }
  }

  // purity: duplicated manifest rows give identical decisions
  auto man_a2 = d.man_a;
  auto man_b12 = d.man_b1;
  auto man_b22 = d.man_b2;
  for (auto* m : {&man_a2, &man_b12, &man_b22}) {
    auto copy = (*m)[0];
    copy.id = "dup";
    m->push_back(copy);
  }
  const auto dup = infer_batch(InferMode::kCascade, man_a2, man_b12, man_b22, d.ckpt_a, d.ckpt_b1,
                               d.ckpt_b2, 0.5);
  CHECK(dup.back().final_class == dup.front().final_class);
  CHECK(*dup.back().stage1_score == *dup.front().stage1_score);

  // missing checkpoint
  CHECK_THROWS_AS(infer_batch(InferMode::kCascade, d.man_a, d.man_b1, d.man_b2,
                              (d.dir / "nope.ckpt").string(), d.ckpt_b1, d.ckpt_b2, 0.5),
                  Error);

  // misaligned manifests
  auto shuffled = d.man_b2;
  std::swap(shuffled[0], shuffled[1]);
  CHECK_THROWS_AS(infer_batch(InferMode::kB1B2, {}, d.man_b1, shuffled, "", d.ckpt_b1, d.ckpt_b2,
                              0.5),
                  Error);
  fs::remove_all(d.dir);
}

TEST_CASE("infer mode parsing") {
  CHECK(infer_mode_from_string("cascade") == InferMode::kCascade);
  CHECK(infer_mode_from_string("a+b2") == InferMode::kAB2);
  CHECK_THROWS_AS(infer_mode_from_string("b3"), Error);
  CHECK(infer_mode_uses_stage1(InferMode::kAB1));
  CHECK_FALSE(infer_mode_uses_stage1(InferMode::kB1B2));
}
