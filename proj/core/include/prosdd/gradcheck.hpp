#pragma once

#include "prosdd/model.hpp"

namespace prosdd {

// Finite-difference verification of both stage losses on a tiny model
// (H=16, T=20) with synthetic targets; covers all three parameter groups.
struct GradCheckSummary {
  GradCheckReport stage1;
  GradCheckReport stage2_joint;
  bool passed(double tolerance = 1e-4) const {
    return stage1.max_rel_error <= tolerance && stage2_joint.max_rel_error <= tolerance;
  }
};

GradCheckSummary run_gradcheck_harness(int coords_per_group = 200);

}  // namespace prosdd
