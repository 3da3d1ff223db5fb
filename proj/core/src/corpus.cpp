#include "prosdd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "prosdd/audio_io.hpp"
#include "prosdd/rng.hpp"

namespace prosdd {

std::string to_string(AttackFamily a) {
  switch (a) {
    case AttackFamily::none: return "none";
    case AttackFamily::A_flat_pitch: return "A_flat_pitch";
    case AttackFamily::B_pitch_discontinuity: return "B_pitch_discontinuity";
    case AttackFamily::C_cross_speaker_prosody: return "C_cross_speaker_prosody";
    case AttackFamily::D_unnatural_expressive: return "D_unnatural_expressive";
  }
  throw DataError("bad attack family");
}

std::string to_string(Label l) { return l == Label::bonafide ? "bonafide" : "spoof"; }

std::string to_string(Split s) {
  switch (s) {
    case Split::stage1_real: return "stage1_real";
    case Split::stage2_train: return "stage2_train";
    case Split::stage2_dev: return "stage2_dev";
    case Split::eval_seen: return "eval_seen";
    case Split::eval_expressive_shift: return "eval_expressive_shift";
  }
  throw DataError("bad split");
}

AttackFamily attack_from_string(const std::string& s) {
  for (auto a : {AttackFamily::none, AttackFamily::A_flat_pitch, AttackFamily::B_pitch_discontinuity,
                 AttackFamily::C_cross_speaker_prosody, AttackFamily::D_unnatural_expressive}) {
    if (to_string(a) == s) return a;
  }
  throw DataError("unknown attack family: " + s);
}

Label label_from_string(const std::string& s) {
  if (s == "bonafide") return Label::bonafide;
  if (s == "spoof") return Label::spoof;
  throw DataError("unknown label: " + s);
}

Split split_from_string(const std::string& s) {
  for (auto sp : {Split::stage1_real, Split::stage2_train, Split::stage2_dev, Split::eval_seen,
                  Split::eval_expressive_shift}) {
    if (to_string(sp) == s) return sp;
  }
  throw DataError("unknown split: " + s);
}

std::vector<ManifestEntry> Manifest::split(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(e);
  return out;
}

void Manifest::validate() const {
  std::set<AttackFamily> train_families, shift_families;
  for (const auto& e : entries) {
    if ((e.label == Label::bonafide) != (e.attack_family == AttackFamily::none)) {
      throw DataError("manifest entry " + e.utterance_id + ": label/attack mismatch");
    }
    if (e.split == Split::stage1_real && e.label != Label::bonafide) {
      throw DataError("stage1_real split contains spoof entry " + e.utterance_id);
    }
    if (e.split == Split::stage2_train && e.label == Label::spoof)
      train_families.insert(e.attack_family);
    if (e.split == Split::eval_expressive_shift && e.label == Label::spoof)
      shift_families.insert(e.attack_family);
  }
  bool any_withheld = false;
  for (auto a : shift_families) {
    if (!train_families.count(a)) any_withheld = true;
  }
  if (!shift_families.empty() && !any_withheld) {
    throw DataError("eval_expressive_shift has no attack family withheld from stage2_train");
  }
}

void CorpusConfig::validate() const {
  if (n_speakers < 2) {
    throw DataError("need at least 2 speakers (inter-speaker negatives and attack C "
                    "require a second speaker)");
  }
  const int total = stage1_bona + stage2_train_bona + stage2_train_spoof + stage2_dev_bona +
                    stage2_dev_spoof + eval_seen_bona + eval_seen_spoof + shift_bona + shift_spoof;
  if (total != utts_per_speaker) {
    throw DataError("split layout sums to " + std::to_string(total) + " but utts_per_speaker is " +
                    std::to_string(utts_per_speaker));
  }
  for (auto a : shift_attacks) {
    if (std::find(train_attacks.begin(), train_attacks.end(), a) != train_attacks.end()) {
      throw DataError("shift attack family " + to_string(a) + " also appears in train_attacks");
    }
  }
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum SegType { kVoiced, kUnvoiced, kSilence };

struct Segment {
  int start = 0, len = 0;
  SegType type = kVoiced;
  double amp = 1.0;
  double b_mult = 1.0;  // attack B per-voiced-segment F0 multiplier
};

// resonance envelope evaluated at frequency f; narrow peaks over a low
// floor so the envelope differs sharply between speakers
double resonance_gain(const std::array<double, 3>& centers, double f) {
  double g = 0.01;
  for (double c : centers) {
    const double d = (f - c) / 60.0;
    g += 1.0 / (1.0 + d * d);
  }
  return g;
}

// per-speaker harmonic rolloff exponent, derived deterministically from the
// profile so speakers do not share a common spectral tilt
double tilt_exponent(const SpeakerProfile& p) {
  return 0.5 + 1.5 * (p.resonance_centers[0] - 350.0) / 400.0;  // [0.5, 2.0]
}

}  // namespace

SpeakerProfile gen_speaker_profile(std::uint64_t seed, int speaker_index) {
  if (speaker_index < 0) throw DataError("speaker_index must be >= 0");
  Rng rng(mix(mix(seed, 0x5eaceu), std::uint64_t(speaker_index)));
  SpeakerProfile p;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "spk%03d", speaker_index);
  p.speaker_id = buf;
  p.base_f0 = 90.0 + 210.0 * rng.uniform();  // [90, 300]
  p.f0_variability = 0.05 + 0.05 * rng.uniform();
  p.resonance_centers[0] = 350.0 + 400.0 * rng.uniform();
  p.resonance_centers[1] = p.resonance_centers[0] + 400.0 + 500.0 * rng.uniform();
  p.resonance_centers[2] = p.resonance_centers[1] + 600.0 + 900.0 * rng.uniform();
  p.speaking_rate = 2.5 + 1.0 * rng.uniform();
  return p;
}

std::vector<float> synth_utterance(const SpeakerProfile& profile, AttackFamily attack,
                                   std::uint64_t rng_seed, const SpeakerProfile* donor) {
  if (attack == AttackFamily::C_cross_speaker_prosody) {
    if (donor == nullptr || donor->speaker_id == profile.speaker_id) {
      throw DataError("cross-speaker source required");
    }
  }
  Rng rng(rng_seed);

  // segment plan: repeated [voiced, voiced, unvoiced, silence] groups, scaled
  // by speaking rate with per-segment jitter
  const double scale = 3.0 / profile.speaking_rate;
  std::vector<Segment> segs;
  int pos = 0;
  int voiced_count = 0;
  while (pos < kUtteranceSamples) {
    const double group[4][2] = {{0.22, kVoiced}, {0.18, kVoiced}, {0.08, kUnvoiced}, {0.03, kSilence}};
    for (const auto& g : group) {
      Segment s;
      s.start = pos;
      const double jitter = 0.8 + 0.4 * rng.uniform();
      s.len = std::max(1, int(g[0] * scale * jitter * kSampleRate));
      s.type = SegType(int(g[1]));
      s.amp = 0.9 + 0.1 * rng.uniform();
      if (s.type == kVoiced) {
        s.b_mult = (voiced_count % 2 == 0) ? 1.35 : 1.0 / 1.35;
        ++voiced_count;
      }
      if (s.start + s.len > kUtteranceSamples) s.len = kUtteranceSamples - s.start;
      pos = s.start + s.len;
      segs.push_back(s);
      if (pos >= kUtteranceSamples) break;
    }
  }

  // F0 contour source: the target profile, or the donor for attack C
  const SpeakerProfile& src = (attack == AttackFamily::C_cross_speaker_prosody) ? *donor : profile;
  double dev_scale = src.f0_variability;
  if (attack == AttackFamily::A_flat_pitch) dev_scale *= 0.1;

  // smooth AR(1) walk sampled at the frame hop
  const int n_steps = kUtteranceSamples / kFrameHop + 2;
  std::vector<double> contour(n_steps);
  double w = rng.normal();
  for (int k = 0; k < n_steps; ++k) {
    w = 0.9 * w + 0.4359 * rng.normal();
    contour[k] = src.base_f0 * (1.0 + dev_scale * w);
  }
  if (attack == AttackFamily::D_unnatural_expressive) {
    for (int k = 0; k < n_steps; ++k) {
      const double t = double(k) * kFrameHop / kSampleRate;
      contour[k] = src.base_f0 * (1.0 + 0.4 * std::sin(2.0 * M_PI * 3.0 * t));
    }
  }
  auto f0_at = [&](int n, double b_mult) {
    const int k = n / kFrameHop;
    const double frac = double(n % kFrameHop) / kFrameHop;
    const double f = contour[k] * (1.0 - frac) + contour[k + 1] * frac;
    return std::clamp(f * b_mult, 65.0, 480.0);
  };

  std::vector<float> out(kUtteranceSamples, 0.0f);
  double phase = 0.0;
  double noise_state = 0.0;
  // per-speaker noise color; keeps every mel band energized so the spectral
  // shape above the last harmonic still carries speaker identity
  const double color = 0.3 + 0.5 * (profile.resonance_centers[2] - 1350.0) / 1800.0;
  for (const auto& s : segs) {
    const int ramp = std::min(s.len / 4, kSampleRate / 100);  // 10 ms raised-cosine edges
    if (s.type == kSilence) continue;
    if (s.type == kVoiced) {
      const double mult = attack == AttackFamily::B_pitch_discontinuity ? s.b_mult : 1.0;
      // harmonic amplitudes from the *profile's* resonances, fixed per segment
      const double f0_mid = f0_at(s.start + s.len / 2, mult);
      const int n_harm = std::clamp(int(6500.0 / f0_mid), 3, 14);
      const double tilt = tilt_exponent(profile);
      std::vector<double> rolloff(n_harm);
      double harm_pow = 0.0;
      for (int h = 0; h < n_harm; ++h) {
        rolloff[h] = 1.0 / std::pow(double(h + 1), tilt);
        const double a = resonance_gain(profile.resonance_centers, (h + 1) * f0_mid) * rolloff[h];
        harm_pow += 0.5 * a * a;
      }
      // aspiration well below the harmonic level so voicing stays detectable
      const double hiss = 0.1 * std::sqrt(harm_pow);
      for (int i = 0; i < s.len; ++i) {
        const int n = s.start + i;
        const double f = f0_at(n, mult);
        phase += f / kSampleRate;
        // harmonics re-sample the resonance envelope as the pitch moves, and
        // raised pitch brightens the source (vocal effort), so any pitch
        // manipulation leaves a spectral footprint
        const double effort = std::pow(f / profile.base_f0, 1.5);
        double v = 0.0;
        for (int h = 0; h < n_harm; ++h) {
          // the glottal source keeps the fundamental strong even when no
          // resonance sits near it; without this the waveform is dominated
          // by one resonant harmonic and pitch trackers jump octaves
          const double gain = resonance_gain(profile.resonance_centers, (h + 1) * f) +
                              (h == 0 ? 0.3 : 0.0);
          v += effort * rolloff[h] * gain * std::sin(2.0 * M_PI * (h + 1) * phase);
        }
        const double white = rng.normal();
        v += hiss * (white - color * noise_state);
        noise_state = white;
        double env = s.amp;
        if (i < ramp) env *= 0.5 - 0.5 * std::cos(M_PI * i / ramp);
        if (s.len - 1 - i < ramp) env *= 0.5 - 0.5 * std::cos(M_PI * (s.len - 1 - i) / ramp);
        out[n] = float(v * env);
      }
    } else {  // unvoiced: noise burst, tilted by the per-speaker color
      for (int i = 0; i < s.len; ++i) {
        const int n = s.start + i;
        const double white = rng.normal();
        const double v = 0.10 * (white - color * noise_state);
        noise_state = white;
        double env = s.amp;
        if (i < ramp) env *= 0.5 - 0.5 * std::cos(M_PI * i / ramp);
        if (s.len - 1 - i < ramp) env *= 0.5 - 0.5 * std::cos(M_PI * (s.len - 1 - i) / ramp);
        out[n] = float(v * env);
      }
    }
  }

  float peak = 0.0f;
  for (float v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0f) {
    const float g = 0.9f / peak;
    for (float& v : out) v *= g;
  }
  return out;
}

Manifest gen_corpus(const CorpusConfig& config, std::uint64_t seed,
                    const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);

  Manifest manifest;
  for (int si = 0; si < config.n_speakers; ++si) {
    const SpeakerProfile profile = gen_speaker_profile(seed, si);
    const SpeakerProfile donor = gen_speaker_profile(seed, (si + 1) % config.n_speakers);

    struct Slot { Split split; AttackFamily attack; };
    std::vector<Slot> slots;
    auto add = [&](Split sp, int n_bona, int n_spoof, const std::vector<AttackFamily>& attacks) {
      for (int i = 0; i < n_bona; ++i) slots.push_back({sp, AttackFamily::none});
      for (int i = 0; i < n_spoof; ++i) slots.push_back({sp, attacks[i % attacks.size()]});
    };
    add(Split::stage1_real, config.stage1_bona, 0, {});
    add(Split::stage2_train, config.stage2_train_bona, config.stage2_train_spoof,
        config.train_attacks);
    add(Split::stage2_dev, config.stage2_dev_bona, config.stage2_dev_spoof, config.train_attacks);
    add(Split::eval_seen, config.eval_seen_bona, config.eval_seen_spoof, config.train_attacks);
    add(Split::eval_expressive_shift, config.shift_bona, config.shift_spoof, config.shift_attacks);

    for (size_t ui = 0; ui < slots.size(); ++ui) {
      const std::uint64_t utt_seed = mix(mix(seed, si + 1), ui + 1);
      const auto& slot = slots[ui];
      const bool needs_donor = slot.attack == AttackFamily::C_cross_speaker_prosody;
      const auto samples =
          synth_utterance(profile, slot.attack, utt_seed, needs_donor ? &donor : nullptr);

      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_utt%03zu", profile.speaker_id.c_str(), ui);
      const std::string utt_id = buf;
      write_f32(out_dir / (utt_id + ".f32"), samples);

      manifest.entries.push_back({utt_id, profile.speaker_id,
                                  slot.attack == AttackFamily::none ? Label::bonafide : Label::spoof,
                                  slot.attack, slot.split});
    }
  }
  manifest.validate();
  write_manifest(manifest, out_dir / "manifest.tsv");
  return manifest;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write manifest: " + path.string());
  for (const auto& e : m.entries) {
    f << e.utterance_id << '\t' << e.speaker_id << '\t' << to_string(e.label) << '\t'
      << to_string(e.attack_family) << '\t' << to_string(e.split) << '\n';
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read manifest: " + path.string());
  Manifest m;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, spk, label, attack, split;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, spk, '\t') ||
        !std::getline(ss, label, '\t') || !std::getline(ss, attack, '\t') ||
        !std::getline(ss, split, '\t')) {
      throw DataError("malformed manifest line: " + line);
    }
    m.entries.push_back({id, spk, label_from_string(label), attack_from_string(attack),
                         split_from_string(split)});
  }
  m.validate();
  return m;
}

}  // namespace prosdd
