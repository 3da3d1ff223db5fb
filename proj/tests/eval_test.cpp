#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "prosdd/eval.hpp"
#include "test_util.hpp"

using namespace prosdd;

namespace {

std::vector<TrialScore> make_trials(const std::vector<double>& bona,
                                    const std::vector<double>& spoof) {
  std::vector<TrialScore> t;
  for (double s : bona) t.push_back({"b", Label::bonafide, AttackFamily::none, s});
  for (double s : spoof) t.push_back({"s", Label::spoof, AttackFamily::A_flat_pitch, s});
  return t;
}

// Independent brute-force oracle: FAR/FRR at every threshold between sorted
// distinct scores (and beyond both ends), interpolated at the sign change of
// FAR - FRR.
double eer_oracle(const std::vector<TrialScore>& trials) {
  std::vector<double> bona, spoof, all;
  for (const auto& t : trials) {
    (t.label == Label::bonafide ? bona : spoof).push_back(t.score);
    all.push_back(t.score);
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> thresholds = {-std::numeric_limits<double>::infinity()};
  thresholds.insert(thresholds.end(), all.begin(), all.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  auto frr_at = [&](double t) {
    return double(std::count_if(bona.begin(), bona.end(), [&](double s) { return s < t; })) /
           bona.size();
  };
  auto far_at = [&](double t) {
    return double(std::count_if(spoof.begin(), spoof.end(), [&](double s) { return s >= t; })) /
           spoof.size();
  };
  for (size_t i = 0; i + 1 < thresholds.size(); ++i) {
    const double d0 = far_at(thresholds[i]) - frr_at(thresholds[i]);
    const double d1 = far_at(thresholds[i + 1]) - frr_at(thresholds[i + 1]);
    if (d0 >= 0.0 && d1 <= 0.0) {
      if (d0 == d1) return frr_at(thresholds[i]);
      const double lambda = d0 / (d0 - d1);
      return frr_at(thresholds[i]) + lambda * (frr_at(thresholds[i + 1]) - frr_at(thresholds[i]));
    }
  }
  return -1.0;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("fixed examples") {
  CHECK(compute_eer(make_trials({0.9, 0.8}, {0.1, 0.2})) == doctest::Approx(0.0));
  CHECK(compute_eer(make_trials({0.9, 0.8, 0.7, 0.3}, {0.6, 0.4, 0.2, 0.1})) ==
        doctest::Approx(0.25));
  // swapped labels on the perfect-separation case invert the metric
  CHECK(compute_eer(make_trials({0.1, 0.2}, {0.9, 0.8})) == doctest::Approx(1.0));
}

TEST_CASE("single-class input is rejected") {
  CHECK_THROWS_AS(compute_eer(make_trials({0.5}, {})), DataError);
  CHECK_THROWS_AS(compute_eer(make_trials({}, {0.5})), DataError);
  std::vector<TrialScore> nan_trial = make_trials({0.5}, {0.1});
  nan_trial[0].score = std::nan("");
  CHECK_THROWS_AS(compute_eer(nan_trial), DataError);
}

TEST_CASE("matches the brute-force oracle on 1000 random score sets") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const int nb = 2 + int(rng.below(99));
    const int ns = 2 + int(rng.below(99));
    std::vector<double> bona(nb), spoof(ns);
    for (auto& s : bona) s = rng.normal() + 0.5;
    for (auto& s : spoof) s = rng.normal() - 0.5;
    // quantize so exact threshold ties occur regularly
    if (trial % 3 == 0) {
      for (auto& s : bona) s = std::round(s * 4.0) / 4.0;
      for (auto& s : spoof) s = std::round(s * 4.0) / 4.0;
    }
    const auto trials = make_trials(bona, spoof);
    CHECK(compute_eer(trials) == doctest::Approx(eer_oracle(trials)).epsilon(1e-12));
  }
}

TEST_CASE("invariant under strictly monotone score transforms") {
  Rng rng(5);
  std::vector<double> bona(30), spoof(30);
  for (auto& s : bona) s = rng.normal() + 0.3;
  for (auto& s : spoof) s = rng.normal() - 0.3;
  auto trials = make_trials(bona, spoof);
  const double base = compute_eer(trials);
  for (auto& t : trials) t.score = 3.0 * t.score + 7.0;
  CHECK(compute_eer(trials) == doctest::Approx(base));
  for (auto& t : trials) t.score = std::tanh(t.score / 10.0);
  CHECK(compute_eer(trials) == doctest::Approx(base));
}

TEST_CASE("det curve endpoints and monotonicity") {
  Rng rng(6);
  std::vector<double> bona(20), spoof(20);
  for (auto& s : bona) s = rng.normal() + 1.0;
  for (auto& s : spoof) s = rng.normal() - 1.0;
  const auto pts = det_points(make_trials(bona, spoof));
  REQUIRE(pts.size() >= 2);
  CHECK(pts.front() == std::pair<double, double>(1.0, 0.0));
  CHECK(pts.back() == std::pair<double, double>(0.0, 1.0));
  for (size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].first <= pts[i - 1].first);    // FAR non-increasing
    CHECK(pts[i].second >= pts[i - 1].second);  // FRR non-decreasing
  }

  const auto sep = det_points(make_trials({0.9, 0.8}, {0.1, 0.2}));
  CHECK(std::find(sep.begin(), sep.end(), std::pair<double, double>(0.0, 0.0)) != sep.end());
}

TEST_CASE("per-attack report structure") {
  std::vector<TrialScore> trials = make_trials({0.9, 0.5, 0.3}, {});
  trials.push_back({"x", Label::spoof, AttackFamily::A_flat_pitch, 0.2});
  trials.push_back({"y", Label::spoof, AttackFamily::A_flat_pitch, 0.6});
  trials.push_back({"z", Label::spoof, AttackFamily::C_cross_speaker_prosody, 0.1});
  const auto report = per_attack_report(trials);
  REQUIRE(report.size() == 2);
  CHECK(report.count(AttackFamily::A_flat_pitch) == 1);
  CHECK(report.count(AttackFamily::C_cross_speaker_prosody) == 1);
  for (const auto& [family, eer] : report) {
    CHECK(eer >= 0.0);
    CHECK(eer <= 1.0);
  }
  CHECK_THROWS_AS(per_attack_report({{"s", Label::spoof, AttackFamily::A_flat_pitch, 0.1}}),
                  DataError);
}

TEST_CASE("pooled EER lies within the per-family range when bona fide is shared") {
  Rng rng(14);
  for (int round = 0; round < 20; ++round) {
    std::vector<TrialScore> trials;
    for (int i = 0; i < 12; ++i)
      trials.push_back({"b", Label::bonafide, AttackFamily::none, rng.normal() + 0.5});
    for (int i = 0; i < 8; ++i)
      trials.push_back({"a", Label::spoof, AttackFamily::A_flat_pitch, rng.normal() - 1.0});
    for (int i = 0; i < 8; ++i)
      trials.push_back({"d", Label::spoof, AttackFamily::D_unnatural_expressive, rng.normal()});
    const auto report = per_attack_report(trials);
    double lo = 1.0, hi = 0.0;
    for (const auto& [family, eer] : report) {
      lo = std::min(lo, eer);
      hi = std::max(hi, eer);
    }
    const double pooled = compute_eer(trials);
    CHECK(pooled >= lo - 1e-9);
    CHECK(pooled <= hi + 1e-9);
  }
}

TEST_CASE("tiny spoof sets hit the boundary without crashing") {
  for (double s : {-5.0, 0.5, 5.0}) {
    const auto trials = make_trials({0.4, 0.6}, {s});
    const double eer = compute_eer(trials);
    CHECK(eer >= 0.0);
    CHECK(eer <= 1.0);
  }
}

TEST_CASE("score file round trip and header") {
  testutil::TempDir d("eval_scores");
  std::vector<TrialScore> scores = {
      {"utt1", Label::bonafide, AttackFamily::none, 1.23456789},
      {"utt2", Label::spoof, AttackFamily::D_unnatural_expressive, -0.000123456789},
  };
  const auto p = d.path / "scores.tsv";
  write_scores(scores, p);
  const std::string text = testutil::slurp(p);
  CHECK(text.rfind("# prosdd-scores v1 polarity=bonafide-high\n", 0) == 0);

  const auto back = read_scores(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].trial_id == "utt1");
  CHECK(back[1].attack_family == AttackFamily::D_unnatural_expressive);
  CHECK(back[0].score == doctest::Approx(scores[0].score).epsilon(1e-9));
  CHECK(back[1].score == doctest::Approx(scores[1].score).epsilon(1e-9));

  std::ofstream(d.path / "bad.tsv") << "no header\n";
  CHECK_THROWS_WITH_AS(read_scores(d.path / "bad.tsv"), doctest::Contains("header"), DataError);
}

}  // TEST_SUITE
