#include "prosdd/prosody.hpp"

#include <algorithm>
#include <cmath>

namespace prosdd {

std::vector<std::vector<float>> frame_signal(const std::vector<float>& samples) {
  if (static_cast<int>(samples.size()) != kUtteranceSamples) {
    throw DataError("frame_signal expects exactly 64000 samples, got " +
                    std::to_string(samples.size()));
  }
  std::vector<std::vector<float>> frames(kNumFrames);
  for (int k = 0; k < kNumFrames; ++k) {
    frames[k].assign(kFrameLength, 0.0f);
    const int start = k * kFrameHop;
    const int avail = std::min(kFrameLength, kUtteranceSamples - start);
    std::copy(samples.begin() + start, samples.begin() + start + avail, frames[k].begin());
  }
  return frames;
}

double frame_energy(const std::vector<float>& frame) {
  double sum2 = 0.0;
  for (float s : frame) sum2 += double(s) * double(s);
  const double rms = frame.empty() ? 0.0 : std::sqrt(sum2 / double(frame.size()));
  return std::log(std::max(rms, 1e-6));
}

std::pair<double, bool> estimate_f0(const std::vector<float>& signal, int frame_start,
                                    const ProsodyConfig& cfg) {
  const int lag_min = std::max(1, int(std::floor(kSampleRate / cfg.f0_max_hz)));
  const int lag_max = int(std::ceil(kSampleRate / cfg.f0_min_hz));
  const int need = kFrameLength + lag_max + 1;

  // window with lookahead context, zero-padded past the signal end
  std::vector<double> x(need, 0.0);
  for (int i = 0; i < need; ++i) {
    const int idx = frame_start + i;
    if (idx >= 0 && idx < static_cast<int>(signal.size())) x[i] = signal[idx];
  }

  double e0 = 0.0;
  for (int n = 0; n < kFrameLength; ++n) e0 += x[n] * x[n];
  const double rms = std::sqrt(e0 / kFrameLength);
  if (rms < cfg.rms_gate) return {0.0, false};

  // normalized cross-correlation r(tau) over the frame
  std::vector<double> r(lag_max + 2, 0.0);
  for (int tau = lag_min; tau <= lag_max + 1; ++tau) {
    double num = 0.0, elag = 0.0;
    for (int n = 0; n < kFrameLength; ++n) {
      num += x[n] * x[n + tau];
      elag += x[n + tau] * x[n + tau];
    }
    const double denom = std::sqrt(e0 * elag);
    r[tau] = denom > 0.0 ? num / denom : 0.0;
  }

  double r_max = 0.0;
  for (int tau = lag_min; tau <= lag_max; ++tau) r_max = std::max(r_max, r[tau]);
  if (r_max < cfg.voicing_threshold) return {0.0, false};

  // Smallest local maximum within 2% of the global peak; avoids octave-down
  // errors where r(2T) ties r(T) while not jumping to a half-period peak
  // that is merely close.
  int best = -1;
  for (int tau = lag_min; tau <= lag_max; ++tau) {
    const bool local_peak = (tau == lag_min || r[tau] >= r[tau - 1]) && r[tau] >= r[tau + 1];
    if (local_peak && r[tau] >= 0.98 * r_max) {
      best = tau;
      break;
    }
  }
  if (best < 0) return {0.0, false};

  double lag = best;
  if (best > lag_min && best < lag_max) {
    const double denom = r[best - 1] - 2.0 * r[best] + r[best + 1];
    if (std::abs(denom) > 1e-12) {
      const double delta = 0.5 * (r[best - 1] - r[best + 1]) / denom;
      if (std::abs(delta) < 1.0) lag = best + delta;
    }
  }
  double f0 = kSampleRate / lag;
  f0 = std::clamp(f0, cfg.f0_min_hz, cfg.f0_max_hz);
  return {f0, true};
}

std::vector<FrameFeatures> analyze_utterance(const std::vector<float>& samples,
                                             const ProsodyConfig& cfg) {
  const auto frames = frame_signal(samples);
  std::vector<FrameFeatures> out(kNumFrames);
  for (int k = 0; k < kNumFrames; ++k) {
    FrameFeatures f;
    auto [f0, voiced] = estimate_f0(samples, k * kFrameHop, cfg);
    f.f0 = voiced ? f0 : 0.0;
    f.voiced = voiced;
    f.log_energy = frame_energy(frames[k]);
    out[k] = f;
  }
  // median-filter the voiced track; frames at voicing onsets only see a
  // partial period and occasionally lock onto a high harmonic, and a single
  // such spike badly inflates the utterance pitch statistics
  std::vector<double> filtered(kNumFrames, 0.0);
  for (int k = 0; k < kNumFrames; ++k) {
    if (!out[k].voiced) continue;
    std::vector<double> window;
    for (int j = std::max(0, k - 2); j <= std::min(kNumFrames - 1, k + 2); ++j) {
      if (out[j].voiced) window.push_back(out[j].f0);
    }
    std::nth_element(window.begin(), window.begin() + window.size() / 2, window.end());
    filtered[k] = window[window.size() / 2];
  }
  for (int k = 0; k < kNumFrames; ++k) {
    if (out[k].voiced) out[k].f0 = filtered[k];
  }
  return out;
}

UtteranceStats compute_stats(const std::vector<FrameFeatures>& features) {
  UtteranceStats s;
  double sum = 0.0, sum2 = 0.0;
  int n_voiced = 0;
  for (const auto& f : features) {
    if (f.voiced && f.f0 > 0.0) {
      const double lf = std::log(f.f0);
      sum += lf;
      sum2 += lf * lf;
      ++n_voiced;
    }
  }
  if (n_voiced > 0) {
    s.mean_log_f0 = sum / n_voiced;
    s.std_log_f0 = std::sqrt(std::max(0.0, sum2 / n_voiced - s.mean_log_f0 * s.mean_log_f0));
  } else {
    // global default stats for fully unvoiced utterances
    s.mean_log_f0 = std::log(150.0);
    s.std_log_f0 = 0.3;
    s.f0_fallback = true;
  }

  double esum = 0.0, esum2 = 0.0;
  for (const auto& f : features) {
    esum += f.log_energy;
    esum2 += f.log_energy * f.log_energy;
  }
  const int n = std::max<size_t>(features.size(), 1);
  s.mean_log_energy = esum / n;
  s.std_log_energy = std::sqrt(std::max(0.0, esum2 / n - s.mean_log_energy * s.mean_log_energy));
  return s;
}

namespace {

constexpr int kF0Dims = 85;
constexpr int kVoicingDims = 85;
constexpr int kEnergyDims = 86;
static_assert(kF0Dims + kVoicingDims + kEnergyDims == kProsodyDim);

// sin/cos pairs at geometrically spaced frequencies in [0.5, 2.5]; the cap
// keeps embeddings of nearby feature values similar, so context-based
// prediction of a masked frame stays feasible
void expand_channel(double v, int dims, double* out) {
  const double w_lo = 0.5, w_hi = 2.5;
  const int n_freq = (dims + 1) / 2;
  for (int i = 0; i < n_freq; ++i) {
    const double w =
        n_freq > 1 ? w_lo * std::pow(w_hi / w_lo, double(i) / double(n_freq - 1)) : w_lo;
    out[2 * i] = std::sin(w * v);
    if (2 * i + 1 < dims) out[2 * i + 1] = std::cos(w * v);
  }
}

}  // namespace

Eigen::RowVectorXd prosodic_embedding(const FrameFeatures& f, const UtteranceStats& stats) {
  const double z_f0 = (f.voiced && f.f0 > 0.0)
                          ? (std::log(f.f0) - stats.mean_log_f0) / std::max(stats.std_log_f0, 1e-3)
                          : 0.0;
  const double voicing = f.voiced ? 1.0 : 0.0;
  const double z_energy =
      (f.log_energy - stats.mean_log_energy) / std::max(stats.std_log_energy, 1e-3);

  Eigen::RowVectorXd e(kProsodyDim);
  expand_channel(z_f0, kF0Dims, e.data());
  expand_channel(voicing, kVoicingDims, e.data() + kF0Dims);
  expand_channel(z_energy, kEnergyDims, e.data() + kF0Dims + kVoicingDims);
  // fixed scale puts the embedding near unit norm (sin^2 + cos^2 = 1 per
  // pair), so cosine over the concatenated target weighs the prosodic and
  // unit-norm speaker blocks evenly
  e *= 1.0 / std::sqrt(double(kProsodyDim) / 2.0);
  return e;
}

}  // namespace prosdd
