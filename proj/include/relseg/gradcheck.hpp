#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace relseg {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::int64_t checked_values = 0;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

// Central finite differences (h = 1e-5) against the analytic backward pass:
// per-op checks for every layer kind plus an end-to-end depth-2 relation net
// where every parameter is perturbed. Pass criterion per value: relative
// error < 1e-4, or absolute error < 1e-7 near zero.
GradCheckResult run_gradient_checks(std::uint64_t seed);

}  // namespace relseg
