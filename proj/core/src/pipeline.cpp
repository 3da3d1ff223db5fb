#include "prosdd/pipeline.hpp"

#include <iostream>
#include <map>

#include "prosdd/audio_io.hpp"
#include "prosdd/targets.hpp"

namespace prosdd {

void extract_targets(const Manifest& manifest, const std::filesystem::path& audio_dir,
                     const std::filesystem::path& target_dir,
                     const SpeakerEncoderConfig& spk_cfg, const ProsodyConfig& pros_cfg) {
  std::filesystem::create_directories(target_dir);

  // pass 1: utterance embeddings, grouped by speaker
  std::map<std::string, std::vector<Vec>> by_speaker;
  std::map<std::string, std::vector<float>> audio;
  for (const auto& e : manifest.entries) {
    const auto path = audio_dir / (e.utterance_id + ".f32");
    std::vector<float> samples = read_f32(path);
    if (int(samples.size()) != kUtteranceSamples) {
      throw DataError("utterance " + e.utterance_id + " has wrong length in " + path.string());
    }
    by_speaker[e.speaker_id].push_back(utterance_embedding(samples, spk_cfg));
    audio.emplace(e.utterance_id, std::move(samples));
  }
  std::map<std::string, Vec> speakers;
  for (const auto& [spk, embs] : by_speaker) speakers[spk] = speaker_embedding(embs);

  // pass 2: prosody, targets, caches
  for (const auto& e : manifest.entries) {
    const auto& samples = audio.at(e.utterance_id);
    const auto features = analyze_utterance(samples, pros_cfg);
    const auto stats = compute_stats(features);
    if (stats.f0_fallback) {
      std::cerr << "note: no voiced frames in " << e.utterance_id
                << ", using default F0 stats\n";
    }
    Mat prosody(kNumFrames, kProsodyDim);
    for (int t = 0; t < kNumFrames; ++t) {
      prosody.row(t) = prosodic_embedding(features[t], stats);
    }
    const auto seq = build_target_sequence(e.utterance_id, e.speaker_id,
                                           speakers.at(e.speaker_id), prosody);
    write_cache(seq, target_dir / (e.utterance_id + ".psdt"));
  }
}

std::vector<TrialScore> score_trials(const Model& model, const Manifest& manifest, Split split,
                                     const std::filesystem::path& audio_dir) {
  std::vector<TrialScore> scores;
  for (const auto& e : manifest.split(split)) {
    const auto samples = read_f32(audio_dir / (e.utterance_id + ".f32"));
    if (int(samples.size()) != kUtteranceSamples) {
      throw DataError("utterance " + e.utterance_id + " has wrong length");
    }
    ForwardCache cache;
    const Mat z = model.encode_latents(samples, cache);
    const Mat h = model.contextualize(z, cache, false, nullptr);
    const Vec logits = model.classify(h, cache, false, nullptr);
    scores.push_back({e.utterance_id, e.label, e.attack_family, logits[0] - logits[1]});
  }
  return scores;
}

}  // namespace prosdd
