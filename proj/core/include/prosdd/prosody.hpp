#pragma once

#include <utility>
#include <vector>

#include "prosdd/common.hpp"

namespace prosdd {

struct ProsodyConfig {
  double f0_min_hz = 60.0;
  double f0_max_hz = 500.0;
  double voicing_threshold = 0.5;  // on normalized autocorrelation
  double rms_gate = 1e-4;
};

struct FrameFeatures {
  double f0 = 0.0;  // Hz, 0 when unvoiced
  bool voiced = false;
  double log_energy = 0.0;  // ln(max(rms, 1e-6))
};

// Per-utterance stats used to z-score the embedding channels.
struct UtteranceStats {
  double mean_log_f0 = 0.0;
  double std_log_f0 = 1.0;
  double mean_log_energy = 0.0;
  double std_log_energy = 1.0;
  bool f0_fallback = false;  // true when the utterance had no voiced frames
};

// 64000 samples -> 200 frames of 400 samples, hop 320, zero-padded tail.
std::vector<std::vector<float>> frame_signal(const std::vector<float>& samples);

// Autocorrelation pitch over [f0_min, f0_max]; `signal` provides lookahead
// context past the 400-sample frame starting at `frame_start`.
std::pair<double, bool> estimate_f0(const std::vector<float>& signal, int frame_start,
                                    const ProsodyConfig& cfg = {});

double frame_energy(const std::vector<float>& frame);

std::vector<FrameFeatures> analyze_utterance(const std::vector<float>& samples,
                                             const ProsodyConfig& cfg = {});

UtteranceStats compute_stats(const std::vector<FrameFeatures>& features);

// 256-d deterministic encoding: z-scored log-F0 / voicing flag / z-scored
// log-energy, each expanded through a fixed geometric sinusoid bank
// (85 + 85 + 86 dims).
Eigen::RowVectorXd prosodic_embedding(const FrameFeatures& f, const UtteranceStats& stats);

}  // namespace prosdd
