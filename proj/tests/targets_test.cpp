#include <doctest.h>

#include <fstream>

#include "prosdd/targets.hpp"
#include "test_util.hpp"

using namespace prosdd;

namespace {

ProsodicTargetSequence sample_sequence() {
  Vec spk = Vec::Zero(kSpeakerDim);
  spk[3] = 0.6;
  spk[100] = 0.8;
  Mat prosody = Mat::Random(kNumFrames, kProsodyDim);
  return build_target_sequence("utt0", "spk0", spk, prosody);
}

}  // namespace

TEST_SUITE("targets") {

TEST_CASE("row layout: width 448, repeated speaker block, prosody tail") {
  Vec spk = Vec::Zero(kSpeakerDim);
  spk[3] = 0.6;
  spk[100] = 0.8;
  Mat prosody = Mat::Random(kNumFrames, kProsodyDim);
  const auto seq = build_target_sequence("u", "s", spk, prosody);

  REQUIRE(seq.rows.rows() == kNumFrames);
  REQUIRE(seq.rows.cols() == kTargetDim);
  CHECK((seq.rows.row(0).head(kSpeakerDim) - seq.rows.row(kNumFrames - 1).head(kSpeakerDim))
            .norm() == 0.0);
  // values are quantized to binary32 so the in-memory copy matches the cache
  for (int d = 0; d < kProsodyDim; ++d) {
    CHECK(seq.rows(7, kSpeakerDim + d) == double(float(prosody(7, d))));
  }
}

TEST_CASE("input validation") {
  Mat prosody = Mat::Random(kNumFrames, kProsodyDim);
  Vec short_spk = Vec::Ones(10);
  CHECK_THROWS_AS(build_target_sequence("u", "s", short_spk, prosody), DataError);

  Vec not_unit = Vec::Ones(kSpeakerDim);
  CHECK_THROWS_AS(build_target_sequence("u", "s", not_unit, prosody), DataError);

  Vec spk = Vec::Zero(kSpeakerDim);
  spk[0] = 1.0;
  Mat bad_prosody = Mat::Random(100, kProsodyDim);
  CHECK_THROWS_AS(build_target_sequence("u", "s", spk, bad_prosody), DataError);
}

TEST_CASE("cache round trip is bit-exact") {
  testutil::TempDir d("targets_rt");
  const auto seq = sample_sequence();
  const auto p1 = d.path / "a.psdt";
  const auto p2 = d.path / "b.psdt";
  write_cache(seq, p1);
  const auto back = read_cache(p1);
  CHECK(back.speaker_id == seq.speaker_id);
  REQUIRE(back.rows.rows() == seq.rows.rows());
  CHECK((back.rows - seq.rows).cwiseAbs().maxCoeff() == 0.0);
  write_cache(back, p2);
  CHECK(testutil::same_bytes(p1, p2));
}

TEST_CASE("bad magic is reported") {
  testutil::TempDir d("targets_magic");
  const auto p = d.path / "bad.psdt";
  std::ofstream(p, std::ios::binary) << "NOPE this is not a target cache";
  CHECK_THROWS_WITH_AS(read_cache(p), doctest::Contains("bad magic"), DataError);
}

TEST_CASE("truncated file is reported") {
  testutil::TempDir d("targets_trunc");
  const auto full = d.path / "full.psdt";
  write_cache(sample_sequence(), full);
  const std::string bytes = testutil::slurp(full);
  const auto cut = d.path / "cut.psdt";
  std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_WITH_AS(read_cache(cut), doctest::Contains("truncated"), DataError);
}

}  // TEST_SUITE
