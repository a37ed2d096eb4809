// tests/grad_check.h
//
// Central finite-difference oracle for gradients. Independent of the
// backward implementations it checks: it only re-runs forward passes.

#ifndef RNNT_TESTS_GRAD_CHECK_H_
#define RNNT_TESTS_GRAD_CHECK_H_

#include <cmath>
#include <functional>
#include <vector>

#include "rnnt/tensor.h"

namespace rnnt::testing {

// |a - f| <= tol * max(1, |a|, |f|)
inline bool grad_close(double analytic, double fd, double tol) {
  const double denom = std::max({1.0, std::fabs(analytic), std::fabs(fd)});
  return std::fabs(analytic - fd) <= tol * denom;
}

struct GradCheckResult {
  bool ok = true;
  double worst_rel = 0.0;
  int64_t worst_index = -1;
  int worst_input = -1;
};

// forward() must recompute the scalar loss from the current contents of
// `inputs` (no tape needed). analytic[i] holds dLoss/d inputs[i] flattened.
inline GradCheckResult fd_check(
    std::vector<Tensor>& inputs,
    const std::function<double()>& forward,
    const std::vector<std::vector<double>>& analytic, double tol,
    double h = 1e-5) {
  GradCheckResult res;
  for (size_t which = 0; which < inputs.size(); ++which) {
    Tensor& x = inputs[which];
    for (int64_t i = 0; i < x.numel(); ++i) {
      const double keep = x.at(i);
      x.at(i) = keep + h;
      const double up = forward();
      x.at(i) = keep - h;
      const double down = forward();
      x.at(i) = keep;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[which][static_cast<size_t>(i)];
      const double denom = std::max({1.0, std::fabs(an), std::fabs(fd)});
      const double rel = std::fabs(an - fd) / denom;
      if (rel > res.worst_rel) {
        res.worst_rel = rel;
        res.worst_index = i;
        res.worst_input = static_cast<int>(which);
      }
      if (!grad_close(an, fd, tol)) res.ok = false;
    }
  }
  return res;
}

}  // namespace rnnt::testing

#endif  // RNNT_TESTS_GRAD_CHECK_H_
