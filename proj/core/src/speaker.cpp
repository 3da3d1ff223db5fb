#include "prosdd/speaker.hpp"

#include <cmath>
#include <complex>

#include "prosdd/prosody.hpp"
#include "prosdd/rng.hpp"

namespace prosdd {

namespace {

constexpr int kFftSize = 512;

// in-place iterative radix-2 FFT
void fft(std::vector<std::complex<double>>& a) {
  const int n = static_cast<int>(a.size());
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / len;
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (int k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// triangular mel filterbank over [0, sr/2], (n_bands, n_bins)
Mat mel_filterbank(int n_bands) {
  const int n_bins = kFftSize / 2 + 1;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(kSampleRate / 2.0);
  std::vector<double> edges(n_bands + 2);
  for (int i = 0; i < n_bands + 2; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_bands + 1));
  }
  Mat fb = Mat::Zero(n_bands, n_bins);
  for (int b = 0; b < n_bands; ++b) {
    for (int k = 0; k < n_bins; ++k) {
      const double f = double(k) * kSampleRate / kFftSize;
      if (f >= edges[b] && f <= edges[b + 1]) {
        fb(b, k) = (f - edges[b]) / std::max(edges[b + 1] - edges[b], 1e-9);
      } else if (f > edges[b + 1] && f <= edges[b + 2]) {
        fb(b, k) = (edges[b + 2] - f) / std::max(edges[b + 2] - edges[b + 1], 1e-9);
      }
    }
  }
  return fb;
}

// fixed seeded column-orthonormal 48 -> 192 expansion (Gram-Schmidt on
// Gaussian columns)
Mat expansion_matrix(int out_dim, int in_dim, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(out_dim, in_dim);
  for (int i = 0; i < out_dim; ++i)
    for (int j = 0; j < in_dim; ++j) m(i, j) = rng.normal();
  for (int j = 0; j < in_dim; ++j) {
    for (int k = 0; k < j; ++k) {
      const double dot = m.col(j).dot(m.col(k));
      m.col(j) -= dot * m.col(k);
    }
    m.col(j) /= m.col(j).norm();
  }
  return m;
}

}  // namespace

Vec utterance_embedding(const std::vector<float>& samples, const SpeakerEncoderConfig& cfg) {
  const auto frames = frame_signal(samples);

  std::vector<double> hann(kFrameLength);
  for (int i = 0; i < kFrameLength; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (kFrameLength - 1));
  }

  static const Mat fb = mel_filterbank(24);
  const int n_bands = cfg.n_mel_bands;
  if (n_bands != 24) throw DataError("speaker encoder supports 24 mel bands");

  Mat band_log(kNumFrames, n_bands);
  std::vector<std::complex<double>> buf(kFftSize);
  Vec power(kFftSize / 2 + 1);
  for (int t = 0; t < kNumFrames; ++t) {
    for (int i = 0; i < kFftSize; ++i) {
      buf[i] = i < kFrameLength ? frames[t][i] * hann[i] : 0.0;
    }
    fft(buf);
    for (int k = 0; k <= kFftSize / 2; ++k) power[k] = std::norm(buf[k]);
    const Vec bands = fb * power;
    for (int b = 0; b < n_bands; ++b) band_log(t, b) = std::log(std::max(bands[b], 1e-10));
  }

  Vec stats(2 * n_bands);
  for (int b = 0; b < n_bands; ++b) {
    const double mean = band_log.col(b).mean();
    const double var = (band_log.col(b).array() - mean).square().mean();
    stats[b] = mean;
    stats[n_bands + b] = std::sqrt(std::max(var, 0.0));
  }
  // standardize the stats vector; without this every speaker shares a large
  // common offset (overall loudness and spectral tilt) and cross-speaker
  // cosines sit near 1
  const double s_mean = stats.mean();
  const double s_std = std::sqrt((stats.array() - s_mean).square().mean());
  stats = (stats.array() - s_mean) / std::max(s_std, 1e-9);

  static Mat expansion;
  static std::uint64_t expansion_seed_used = 0;
  if (expansion.size() == 0 || expansion_seed_used != cfg.expansion_seed) {
    expansion = expansion_matrix(kSpeakerDim, 2 * n_bands, cfg.expansion_seed);
    expansion_seed_used = cfg.expansion_seed;
  }
  return expansion * stats;
}

Vec speaker_embedding(const std::vector<Vec>& utterance_embeddings) {
  if (utterance_embeddings.empty()) throw DataError("speaker_embedding: empty input");
  Vec mean = Vec::Zero(utterance_embeddings.front().size());
  for (const auto& e : utterance_embeddings) {
    if (e.size() != mean.size()) throw DataError("speaker_embedding: dimension mismatch");
    mean += e;
  }
  mean /= double(utterance_embeddings.size());
  const double norm = mean.norm();
  if (norm < 1e-12) throw DataError("degenerate speaker");
  return mean / norm;
}

}  // namespace prosdd
