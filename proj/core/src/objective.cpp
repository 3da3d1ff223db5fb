#include "prosdd/objective.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace prosdd {

double cosine_similarity(const Vec& a, const Vec& b) {
  const double denom = std::max(a.norm() * b.norm(), 1e-8);
  return a.dot(b) / denom;
}

NegativeSet sample_negatives(int utt_index, int frame, const std::vector<BatchTargets>& batch,
                             int K, Rng& rng) {
  if (utt_index < 0 || utt_index >= int(batch.size())) throw DataError("bad utterance index");
  const auto& pos_targets = *batch[utt_index].targets;
  const int T = int(pos_targets.rows.rows());
  if (frame < 0 || frame >= T) throw DataError("bad frame index");
  if (T < 2) throw DataError("utterance needs at least 2 frames for intra negatives");

  std::vector<int> other_speakers;
  for (int i = 0; i < int(batch.size()); ++i) {
    if (batch[i].speaker_id != batch[utt_index].speaker_id) other_speakers.push_back(i);
  }
  if (other_speakers.empty()) throw DataError("inter-speaker negatives unavailable");

  const int n_intra = K / 2;
  const int n_inter = K - n_intra;
  NegativeSet set;
  set.K = K;
  set.vectors.resize(K, kTargetDim);

  // intra: frames t' != t of the same utterance; without replacement when
  // the pool allows it
  std::vector<int> pool;
  pool.reserve(T - 1);
  for (int t = 0; t < T; ++t)
    if (t != frame) pool.push_back(t);
  if (int(pool.size()) >= n_intra) {
    for (int i = 0; i < n_intra; ++i) {
      const int j = i + int(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      set.intra_frames.push_back(pool[i]);
    }
  } else {
    for (int i = 0; i < n_intra; ++i) set.intra_frames.push_back(pool[rng.below(pool.size())]);
  }
  for (int i = 0; i < n_intra; ++i) {
    set.vectors.row(i) = pos_targets.rows.row(set.intra_frames[i]);
  }

  // inter: a different speaker's block with the positive's own prosodic frame
  for (int i = 0; i < n_inter; ++i) {
    const int b = other_speakers[rng.below(other_speakers.size())];
    set.inter_utterances.push_back(b);
    set.vectors.row(n_intra + i).head(kSpeakerDim) =
        batch[b].targets->rows.row(0).head(kSpeakerDim);
    set.vectors.row(n_intra + i).tail(kProsodyDim) = pos_targets.rows.row(frame).tail(kProsodyDim);
  }
  return set;
}

double infonce_loss(const Vec& prediction, const Vec& positive, const Mat& negatives, double tau,
                    Vec* d_pred) {
  if (tau <= 0.0) throw DataError("temperature must be positive");
  const int K = int(negatives.rows());
  const double p_norm = std::max(prediction.norm(), 1e-8);

  Vec sims(K + 1);
  sims[0] = cosine_similarity(prediction, positive);
  for (int j = 0; j < K; ++j) {
    sims[j + 1] = cosine_similarity(prediction, negatives.row(j).transpose());
  }
  Vec scaled = sims / tau;
  const double mx = scaled.maxCoeff();
  const Vec ex = (scaled.array() - mx).exp();
  const double Z = ex.sum();
  const double loss = -(scaled[0] - mx - std::log(Z));

  if (d_pred) {
    // dL/ds_j = pi_j - [j == 0]
    Vec d_s = ex / Z;
    d_s[0] -= 1.0;
    d_s /= tau;
    d_pred->setZero(prediction.size());
    auto add_cos_grad = [&](double coeff, const Vec& q, double cos_pq) {
      const double q_norm = std::max(q.norm(), 1e-8);
      *d_pred += coeff * (q / (p_norm * q_norm) - cos_pq * prediction / (p_norm * p_norm));
    };
    add_cos_grad(d_s[0], positive, sims[0]);
    for (int j = 0; j < K; ++j) {
      add_cos_grad(d_s[j + 1], negatives.row(j).transpose(), sims[j + 1]);
    }
  }
  return loss;
}

double weighted_cross_entropy(const Vec& logits, int label, const Vec& class_weights,
                              Vec* d_logits) {
  if (label < 0 || label >= logits.size()) throw DataError("bad class label");
  if (class_weights.size() != logits.size()) throw DataError("class weight size mismatch");
  const double w = class_weights[label];
  const double mx = logits.maxCoeff();
  const Vec ex = (logits.array() - mx).exp();
  const double Z = ex.sum();
  const double log_p = logits[label] - mx - std::log(Z);
  if (d_logits) {
    *d_logits = w * (ex / Z);
    (*d_logits)[label] -= w;
  }
  return -w * log_p;
}

double joint_loss(double l_cls, double l_ssl, double alpha, double beta) {
  return alpha * l_cls + beta * l_ssl;
}

}  // namespace prosdd
