#pragma once

#include <filesystem>

#include "prosdd/corpus.hpp"
#include "prosdd/eval.hpp"
#include "prosdd/model.hpp"
#include "prosdd/prosody.hpp"
#include "prosdd/speaker.hpp"

namespace prosdd {

// One `PSDT` cache per manifest entry. Speaker embeddings are built from
// all of that speaker's utterances across the whole manifest.
void extract_targets(const Manifest& manifest, const std::filesystem::path& audio_dir,
                     const std::filesystem::path& target_dir,
                     const SpeakerEncoderConfig& spk_cfg = {}, const ProsodyConfig& pros_cfg = {});

// Deterministic eval-mode scoring: score = logit(bonafide) - logit(spoof).
std::vector<TrialScore> score_trials(const Model& model, const Manifest& manifest, Split split,
                                     const std::filesystem::path& audio_dir);

}  // namespace prosdd
