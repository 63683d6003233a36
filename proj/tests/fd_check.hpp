#ifndef FTRL_TESTS_FD_CHECK_HPP
#define FTRL_TESTS_FD_CHECK_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ftrl/tensor.hpp"

namespace ftrl::testing {

// Independent gradient oracle: central finite differences at h = 1e-5.
// `f` evaluates the scalar function at a full input vector (all perturbable
// values flattened); the returned vector is d f / d x_i for every i.
inline std::vector<double> central_differences(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-5) {
  std::vector<double> grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f(x);
    x[i] = saved - h;
    const double fm = f(x);
    x[i] = saved;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Relative agreement with an absolute floor so near-zero gradients do not
// blow the ratio up on finite-difference noise.
inline bool grad_close(double analytic, double numeric, double rel_tol = 1e-4,
                       double abs_floor = 1e-6) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_floor) return true;
  const double denom = std::max(std::abs(analytic), std::abs(numeric));
  return diff / denom <= rel_tol;
}

struct FdReport {
  bool ok = true;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline FdReport compare_grads(const std::vector<double>& analytic,
                              const std::vector<double>& numeric,
                              double rel_tol = 1e-4, double abs_floor = 1e-6) {
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (!grad_close(analytic[i], numeric[i], rel_tol, abs_floor)) {
      return {false, i, analytic[i], numeric[i]};
    }
  }
  return {};
}

}  // namespace ftrl::testing

#endif  // FTRL_TESTS_FD_CHECK_HPP
