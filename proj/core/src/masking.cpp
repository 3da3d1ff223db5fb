#include "prosdd/masking.hpp"

#include <algorithm>

namespace prosdd {

MaskPlan sample_spans(int T, int span_length, double target_fraction, Rng& rng,
                      bool probability_is_fraction) {
  if (T <= 0) throw DataError("sample_spans: T must be positive");
  if (span_length < 1) throw DataError("sample_spans: span_length must be >= 1");
  if (target_fraction < 0.0 || target_fraction > 1.0) {
    throw DataError("sample_spans: target_fraction must be in [0, 1]");
  }
  const double p_start =
      probability_is_fraction ? target_fraction / span_length : target_fraction;

  std::vector<bool> masked(T, false);
  for (int s = 0; s < T; ++s) {
    if (rng.uniform() < p_start) {
      for (int i = s; i < std::min(s + span_length, T); ++i) masked[i] = true;
    }
  }
  MaskPlan plan;
  plan.span_length = span_length;
  plan.target_fraction = target_fraction;
  for (int i = 0; i < T; ++i)
    if (masked[i]) plan.masked.push_back(i);
  return plan;
}

Mat apply_mask(const Mat& latents, const MaskPlan& plan, const Vec& mask_vector) {
  if (mask_vector.size() != latents.cols()) throw DataError("apply_mask: dimension mismatch");
  Mat out = latents;
  for (int i : plan.masked) {
    if (i < 0 || i >= latents.rows()) throw DataError("apply_mask: index out of range");
    out.row(i) = mask_vector.transpose();
  }
  return out;
}

}  // namespace prosdd
