#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "p3o/rng.hpp"

namespace p3o {

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  int64_t coords_checked = 0;
  std::string message;  // set on non-finite values, with the offending location

  std::string to_string() const;
};

// Central finite differences against a precomputed analytic gradient.
// loss must be evaluated in 64-bit. The per-coordinate error is
// |num - ana| / max(1, |num|, |ana|), so it is relative for large gradients
// and absolute near zero. max_coords > 0 checks a random subset (for large
// parameter vectors); 0 checks every coordinate.
GradCheckReport finite_diff_gradcheck(const std::function<double(const std::vector<double>&)>& loss,
                                      const std::vector<double>& x0,
                                      const std::vector<double>& analytic_grad, double tolerance,
                                      double step = 1e-5, int64_t max_coords = 0,
                                      uint64_t subset_seed = 0);

}  // namespace p3o
