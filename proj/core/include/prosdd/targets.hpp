#pragma once

#include <filesystem>
#include <string>

#include "prosdd/common.hpp"

namespace prosdd {

// Speaker-conditioned prosodic target sequence: each row is the unit-norm
// 192-d speaker embedding concatenated with the 256-d prosodic frame.
struct ProsodicTargetSequence {
  std::string utterance_id;
  std::string speaker_id;
  Mat rows;  // 200 x 448
};

ProsodicTargetSequence build_target_sequence(const std::string& utterance_id,
                                             const std::string& speaker_id,
                                             const Vec& speaker_emb,  // 192, unit norm
                                             const Mat& prosody);     // 200 x 256

// `PSDT` cache: magic, version u16, T u32, D_s u32, D_p u32,
// length-prefixed speaker_id, then T x 448 binary32 LE row-major.
void write_cache(const ProsodicTargetSequence& seq, const std::filesystem::path& path);
ProsodicTargetSequence read_cache(const std::filesystem::path& path);

}  // namespace prosdd
