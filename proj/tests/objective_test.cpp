#include <doctest.h>

#include <cmath>

#include "prosdd/objective.hpp"

using namespace prosdd;

namespace {

// Small fake target sequences: T frames, constant speaker block.
ProsodicTargetSequence fake_targets(const std::string& spk, int T, std::uint64_t seed) {
  Rng rng(seed);
  ProsodicTargetSequence seq;
  seq.utterance_id = spk + "_u";
  seq.speaker_id = spk;
  seq.rows.resize(T, kTargetDim);
  Vec spk_block = Vec::Zero(kSpeakerDim);
  spk_block[rng.below(kSpeakerDim)] = 1.0;
  for (int t = 0; t < T; ++t) {
    seq.rows.row(t).head(kSpeakerDim) = spk_block.transpose();
    for (int d = 0; d < kProsodyDim; ++d) seq.rows(t, kSpeakerDim + d) = rng.normal();
  }
  return seq;
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("cosine similarity basics") {
  Vec v = Vec::Random(448);
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0));
  CHECK(cosine_similarity(v, -v) == doctest::Approx(-1.0));
  Vec e1 = Vec::Zero(448), e2 = Vec::Zero(448);
  e1[0] = 1.0;
  e2[1] = 1.0;
  CHECK(cosine_similarity(e1, e2) == doctest::Approx(0.0));
  // zero-norm guard: finite, no division by zero
  CHECK(std::isfinite(cosine_similarity(Vec::Zero(448), e1)));
}

TEST_CASE("negative structure: 50 intra + 50 inter with the right blocks") {
  const auto ta = fake_targets("spkA", 200, 1);
  const auto tb = fake_targets("spkB", 200, 2);
  std::vector<BatchTargets> batch = {{&ta, "spkA"}, {&tb, "spkB"}};
  Rng rng(3);
  const int frame = 17;
  const auto neg = sample_negatives(0, frame, batch, 100, rng);
  REQUIRE(neg.K == 100);
  REQUIRE(neg.vectors.rows() == 100);
  REQUIRE(neg.intra_frames.size() == 50);
  REQUIRE(neg.inter_utterances.size() == 50);

  for (int i = 0; i < 50; ++i) {
    CHECK(neg.intra_frames[i] != frame);
    // intra: positive's speaker block, another frame's prosody
    CHECK((neg.vectors.row(i).head(kSpeakerDim) -
           ta.rows.row(frame).head(kSpeakerDim)).norm() == 0.0);
    CHECK((neg.vectors.row(i).tail(kProsodyDim) -
           ta.rows.row(neg.intra_frames[i]).tail(kProsodyDim)).norm() == 0.0);
  }
  for (int i = 50; i < 100; ++i) {
    // inter: other speaker's block, the positive's own prosodic frame
    CHECK((neg.vectors.row(i).head(kSpeakerDim) -
           tb.rows.row(0).head(kSpeakerDim)).norm() == 0.0);
    CHECK((neg.vectors.row(i).tail(kProsodyDim) -
           ta.rows.row(frame).tail(kProsodyDim)).norm() == 0.0);
  }
}

TEST_CASE("intra negatives sample with replacement on short pools") {
  const auto ta = fake_targets("spkA", 3, 4);
  const auto tb = fake_targets("spkB", 3, 5);
  std::vector<BatchTargets> batch = {{&ta, "spkA"}, {&tb, "spkB"}};
  Rng rng(6);
  const auto neg = sample_negatives(0, 1, batch, 100, rng);
  CHECK(neg.intra_frames.size() == 50);
  for (int f : neg.intra_frames) CHECK(f != 1);
}

TEST_CASE("single-speaker batch is rejected") {
  const auto ta = fake_targets("spkA", 200, 1);
  const auto tb = fake_targets("spkA", 200, 2);
  std::vector<BatchTargets> batch = {{&ta, "spkA"}, {&tb, "spkA"}};
  Rng rng(1);
  CHECK_THROWS_WITH_AS(sample_negatives(0, 0, batch, 100, rng),
                       doctest::Contains("inter-speaker"), DataError);
}

TEST_CASE("exact similarity ties give ln(K+1)") {
  Vec target = Vec::Zero(448);
  target[0] = 1.0;
  Mat negatives(100, 448);
  for (int j = 0; j < 100; ++j) negatives.row(j) = 2.0 * target.transpose();  // same cosine
  Vec pred = Vec::Random(448);
  const double loss = infonce_loss(pred, target, negatives, 0.07);
  CHECK(std::abs(loss - std::log(101.0)) < 1e-6);
}

TEST_CASE("perfect prediction matches the closed-form oracle") {
  Vec pos = Vec::Zero(448);
  pos[0] = 1.0;
  Mat negatives = Mat::Zero(100, 448);
  for (int j = 0; j < 100; ++j) negatives(j, 1 + (j % 447)) = 1.0;  // all orthogonal to pos
  const double tau = 0.07;
  const double loss = infonce_loss(pos, pos, negatives, tau);
  // -log( e^{1/tau} / (e^{1/tau} + 100 e^{0}) ) = log1p(100 e^{-1/tau})
  const double oracle = std::log1p(100.0 * std::exp(-1.0 / tau));
  CHECK(std::abs(loss - oracle) < 1e-9);
}

TEST_CASE("infinite temperature flattens the softmax") {
  Vec pos = Vec::Random(448), pred = Vec::Random(448);
  Mat negatives = Mat::Random(100, 448);
  const double loss = infonce_loss(pred, pos, negatives, 1e12);
  CHECK(std::abs(loss - std::log(101.0)) < 1e-6);
}

TEST_CASE("loss decreases as the positive similarity rises, negatives fixed") {
  // disjoint supports: pos on axis 0, negatives on axes 2.., prediction in
  // the span of axes 0 and 1, so only cos(pred, pos) moves
  Vec pos = Vec::Zero(448);
  pos[0] = 1.0;
  Mat negatives = Mat::Zero(100, 448);
  for (int j = 0; j < 100; ++j) negatives(j, 2 + (j % 446)) = 1.0;
  double prev = 1e9;
  for (double c : {-0.5, 0.0, 0.4, 0.9}) {
    Vec pred = Vec::Zero(448);
    pred[0] = c;
    pred[1] = std::sqrt(1.0 - c * c);
    const double loss = infonce_loss(pred, pos, negatives, 0.1);
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("infonce gradient matches finite differences") {
  Vec pos = Vec::Random(448);
  Mat negatives = Mat::Random(20, 448);
  Vec pred = Vec::Random(448);
  Vec d_pred;
  infonce_loss(pred, pos, negatives, 0.1, &d_pred);
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const int i = int(rng.below(448));
    const double eps = 1e-6;
    Vec hi = pred, lo = pred;
    hi[i] += eps;
    lo[i] -= eps;
    const double fd =
        (infonce_loss(hi, pos, negatives, 0.1) - infonce_loss(lo, pos, negatives, 0.1)) /
        (2.0 * eps);
    CHECK(d_pred[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("weighted cross-entropy identities") {
  Vec logits = Vec::Zero(2);
  Vec unit = Vec::Ones(2);
  CHECK(weighted_cross_entropy(logits, 0, unit) == doctest::Approx(std::log(2.0)));

  Vec confident(2);
  confident << 40.0, 0.0;
  CHECK(weighted_cross_entropy(confident, 0, unit) == doctest::Approx(0.0).epsilon(1e-12));

  Vec skewed(2);
  skewed << 0.7, -0.4;
  Vec w(2);
  w << 3.0, 1.0;
  CHECK(weighted_cross_entropy(skewed, 0, w) ==
        doctest::Approx(3.0 * weighted_cross_entropy(skewed, 0, unit)));

  Vec d_w, d_u;
  weighted_cross_entropy(skewed, 1, w, &d_w);
  weighted_cross_entropy(skewed, 1, unit, &d_u);
  CHECK((d_w - 1.0 * d_u).norm() == doctest::Approx(0.0));  // w[1] == 1
}

TEST_CASE("joint loss arithmetic") {
  CHECK(joint_loss(0.5, 1.0, 1.0, 0.2) == doctest::Approx(0.7));
  CHECK(joint_loss(0.31, 2.5, 1.0, 0.0) == doctest::Approx(0.31));
  CHECK(joint_loss(0.31, 2.5, 0.0, 1.0) == doctest::Approx(2.5));
}

TEST_CASE("beta schedule switches after epoch 4") {
  LossWeights w;
  CHECK(w.beta_for_epoch(1) == doctest::Approx(0.2));
  CHECK(w.beta_for_epoch(4) == doctest::Approx(0.2));
  CHECK(w.beta_for_epoch(5) == doctest::Approx(0.05));
  CHECK(w.beta_for_epoch(10) == doctest::Approx(0.05));
}

}  // TEST_SUITE
