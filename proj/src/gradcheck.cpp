#include "p3o/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "p3o/tensor.hpp"

namespace p3o {

std::string GradCheckReport::to_string() const {
  char buf[256];
  if (!message.empty()) {
    std::snprintf(buf, sizeof(buf), "gradcheck FAIL: %s", message.c_str());
  } else {
    std::snprintf(buf, sizeof(buf), "gradcheck %s: max_rel_err=%.3e at index %lld (%lld coords)",
                  pass ? "ok" : "FAIL", max_rel_err, static_cast<long long>(worst_index),
                  static_cast<long long>(coords_checked));
  }
  return std::string(buf);
}

GradCheckReport finite_diff_gradcheck(const std::function<double(const std::vector<double>&)>& loss,
                                      const std::vector<double>& x0,
                                      const std::vector<double>& analytic_grad, double tolerance,
                                      double step, int64_t max_coords, uint64_t subset_seed) {
  require(x0.size() == analytic_grad.size(), "gradcheck: gradient size mismatch");
  require(step > 0.0 && tolerance > 0.0, "gradcheck: step and tolerance must be positive");
  GradCheckReport rep;

  const int64_t n = static_cast<int64_t>(x0.size());
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), int64_t{0});
  if (max_coords > 0 && max_coords < n) {
    Rng rng(mix_seed(subset_seed, 0x67726463));
    rng.shuffle(order);
    order.resize(static_cast<size_t>(max_coords));
    std::sort(order.begin(), order.end());
  }

  for (int64_t i : order) {
    const double ana = analytic_grad[static_cast<size_t>(i)];
    if (!std::isfinite(ana)) {
      rep.message = "non-finite analytic gradient at index " + std::to_string(i);
      return rep;
    }
    std::vector<double> x = x0;
    x[static_cast<size_t>(i)] = x0[static_cast<size_t>(i)] + step;
    const double fp = loss(x);
    x[static_cast<size_t>(i)] = x0[static_cast<size_t>(i)] - step;
    const double fm = loss(x);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      rep.message = "non-finite loss when perturbing index " + std::to_string(i);
      return rep;
    }
    const double num = (fp - fm) / (2.0 * step);
    const double denom = std::max({1.0, std::fabs(num), std::fabs(ana)});
    const double err = std::fabs(num - ana) / denom;
    if (err > rep.max_rel_err) {
      rep.max_rel_err = err;
      rep.worst_index = i;
    }
    ++rep.coords_checked;
  }
  rep.pass = rep.max_rel_err < tolerance;
  return rep;
}

}  // namespace p3o
