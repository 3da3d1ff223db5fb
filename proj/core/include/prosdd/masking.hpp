#pragma once

#include <vector>

#include "prosdd/common.hpp"
#include "prosdd/rng.hpp"

namespace prosdd {

struct MaskPlan {
  std::vector<int> masked;  // sorted, unique frame indices in [0, T)
  int span_length = 8;
  double target_fraction = 0.0;
};

struct MaskingConfig {
  int span_length = 8;
  // When true (default) the configured probability is read as the target
  // masked fraction and span starts fire with p = fraction / span_length;
  // when false it is used directly as the per-frame start probability.
  bool probability_is_fraction = true;
};

MaskPlan sample_spans(int T, int span_length, double target_fraction, Rng& rng,
                      bool probability_is_fraction = true);

// Replace masked rows of `latents` with `mask_vector`; unmasked rows are
// untouched.
Mat apply_mask(const Mat& latents, const MaskPlan& plan, const Vec& mask_vector);

}  // namespace prosdd
