#pragma once

#include <functional>
#include <string>
#include <vector>

#include "durn/autograd.hpp"

namespace durn {

/// One finite-difference check, judged on the norm-wise relative error.
struct GradCheckCase {
  std::string name;
  double threshold;
  std::function<GradCheckReport(double eps)> run;
};

struct GradCheckResult {
  std::string name;
  double error = 0.0;  // norm-wise relative error
  double worst_elementwise = 0.0;
  double threshold = 0.0;
  bool passed = false;
  double seconds = 0.0;
};

/// Every layer kernel, the SE gate, the loss terms and one full block of each
/// variant, on 64-bit inputs of at most 2x8x16x16.
std::vector<GradCheckCase> gradient_suite();

/// Runs the cases whose name contains `filter` (all when empty).
std::vector<GradCheckResult> run_gradient_suite(const std::string& filter = "", double eps = 1e-5);

}  // namespace durn
