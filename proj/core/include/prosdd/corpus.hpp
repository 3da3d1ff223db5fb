#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prosdd/common.hpp"

namespace prosdd {

enum class AttackFamily { none, A_flat_pitch, B_pitch_discontinuity,
                          C_cross_speaker_prosody, D_unnatural_expressive };
enum class Label { bonafide, spoof };
enum class Split { stage1_real, stage2_train, stage2_dev, eval_seen, eval_expressive_shift };

std::string to_string(AttackFamily a);
std::string to_string(Label l);
std::string to_string(Split s);
AttackFamily attack_from_string(const std::string& s);
Label label_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct SpeakerProfile {
  std::string speaker_id;
  double base_f0 = 0.0;                     // Hz, in [80, 400]
  double f0_variability = 0.0;              // std multiplier on the contour walk
  std::array<double, 3> resonance_centers;  // Hz, strictly increasing
  double speaking_rate = 0.0;               // segments per second
};

struct Utterance {
  std::string utterance_id;
  std::string speaker_id;
  std::vector<float> samples;  // exactly 64000 at 16 kHz
  Label label = Label::bonafide;
  AttackFamily attack_family = AttackFamily::none;
};

struct ManifestEntry {
  std::string utterance_id;
  std::string speaker_id;
  Label label;
  AttackFamily attack_family;
  Split split;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(Split s) const;
  void validate() const;  // stage1_real all bonafide; shift attacks withheld from train
};

struct CorpusConfig {
  int n_speakers = 20;
  int utts_per_speaker = 20;
  // per-speaker split layout: (bonafide count, spoof count)
  int stage1_bona = 5;
  int stage2_train_bona = 3, stage2_train_spoof = 3;
  int stage2_dev_bona = 1, stage2_dev_spoof = 1;
  int eval_seen_bona = 1, eval_seen_spoof = 2;
  int shift_bona = 2, shift_spoof = 2;
  std::vector<AttackFamily> train_attacks = {AttackFamily::A_flat_pitch,
                                             AttackFamily::B_pitch_discontinuity};
  std::vector<AttackFamily> shift_attacks = {AttackFamily::C_cross_speaker_prosody,
                                             AttackFamily::D_unnatural_expressive};
  void validate() const;
};

SpeakerProfile gen_speaker_profile(std::uint64_t seed, int speaker_index);

// Pure synthesis: source-filter toy speech with the requested prosodic
// deformation. Attack C needs `donor` (its F0 contour is rendered through
// `profile`'s resonances).
std::vector<float> synth_utterance(const SpeakerProfile& profile, AttackFamily attack,
                                   std::uint64_t rng_seed,
                                   const SpeakerProfile* donor = nullptr);

Manifest gen_corpus(const CorpusConfig& config, std::uint64_t seed,
                    const std::filesystem::path& out_dir);

void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace prosdd
