#pragma once

#include <vector>

#include "prosdd/common.hpp"

namespace prosdd {

struct SpeakerEncoderConfig {
  int n_mel_bands = 24;
  std::uint64_t expansion_seed = 1234567;  // seeds the fixed 48->192 map
};

// Deterministic spectral-statistics utterance embedding: 24 log-mel band
// energies per frame, per-band mean/std over frames, then a fixed seeded
// column-orthonormal 48->192 expansion. Unnormalized.
Vec utterance_embedding(const std::vector<float>& samples,
                        const SpeakerEncoderConfig& cfg = {});

// Mean of utterance embeddings, L2-normalized. Order-invariant.
Vec speaker_embedding(const std::vector<Vec>& utterance_embeddings);

}  // namespace prosdd
