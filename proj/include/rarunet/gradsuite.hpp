#pragma once

#include <string>
#include <vector>

namespace rarunet {

struct GradCheckOutcome {
  std::string name;
  double max_rel_error;
};

/// Finite-difference checks (float64, eps 1e-5) for every differentiable op,
/// the architecture blocks, and, with `include_model`, the full model at
/// base_channels 2 on a 16x16 input.
std::vector<GradCheckOutcome> run_gradient_suite(bool include_model = true);

}  // namespace rarunet
