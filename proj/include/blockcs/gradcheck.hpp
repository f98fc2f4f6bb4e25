#pragma once

#include <string>
#include <vector>

namespace blockcs {

// 64-bit finite-difference audit of every backward kernel plus both model
// families end to end on a tiny config. The relative error metric per
// gradient component is |analytic - numeric| / max(1, |analytic|, |numeric|).

struct GradcheckResult {
  std::string op;
  double worst_rel_err = 0;
  double tolerance = 0;
  bool passed = false;
};

struct GradcheckSummary {
  std::vector<GradcheckResult> results;
  bool all_passed() const;
};

// Deterministic case set. tolerance_override < 0 keeps the per-op defaults
// (1e-6 for kernels, 1e-5 end to end); any non-negative value replaces all
// of them.
GradcheckSummary run_gradcheck_suite(double tolerance_override = -1.0);

}  // namespace blockcs
