#pragma once

#include <string>
#include <vector>

#include "prosdd/common.hpp"
#include "prosdd/rng.hpp"
#include "prosdd/targets.hpp"

namespace prosdd {

struct LossWeights {
  double alpha = 1.0;
  double beta_early = 0.2;   // epochs 1..4
  double beta_late = 0.05;   // epoch 5 onward
  int beta_switch_epoch = 4;
  Vec class_weights = Vec::Ones(2);

  double beta_for_epoch(int epoch_1based) const {
    return epoch_1based <= beta_switch_epoch ? beta_early : beta_late;
  }
};

struct ObjectiveConfig {
  int K = 100;
  double tau_stage1 = 0.07;
  double tau_stage2 = 0.1;
  bool ssl_on_bonafide_only = false;
};

// One utterance of a training batch, seen through its target cache.
struct BatchTargets {
  const ProsodicTargetSequence* targets = nullptr;
  std::string speaker_id;
};

// K negatives for one masked frame: half intra-speaker (same speaker block,
// other frames of the same utterance), half inter-speaker (other speaker's
// block, the positive's own prosodic frame).
struct NegativeSet {
  Mat vectors;                       // K x 448
  std::vector<int> intra_frames;     // K/2 source frame indices
  std::vector<int> inter_utterances; // K/2 source batch indices
  int K = 0;
};

double cosine_similarity(const Vec& a, const Vec& b);

NegativeSet sample_negatives(int utt_index, int frame, const std::vector<BatchTargets>& batch,
                             int K, Rng& rng);

// -log softmax of the positive among {positive} + negatives under
// temperature-scaled cosine similarity. If `d_pred` is non-null it receives
// dL/d(prediction); targets carry no gradient.
double infonce_loss(const Vec& prediction, const Vec& positive, const Mat& negatives, double tau,
                    Vec* d_pred = nullptr);

// Unnormalized per-sample weighted CE: -w_label * log softmax(logits)[label].
// Batch reduction (divide by the sum of applied weights) is the caller's.
double weighted_cross_entropy(const Vec& logits, int label, const Vec& class_weights,
                              Vec* d_logits = nullptr);

double joint_loss(double l_cls, double l_ssl, double alpha, double beta);

}  // namespace prosdd
