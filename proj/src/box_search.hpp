#pragma once

// Internal helpers shared by the surrogate: bounded Nelder-Mead and shifted
// Sobol point sets, both backed by GSL.

#include <cstddef>
#include <functional>
#include <vector>

#include "ilc/rng.hpp"

namespace ilc::detail {

struct BoxMinimum {
  std::vector<double> x;
  double value = 0.0;
};

/// Minimizes f over the box [lo, hi] starting at x0. The objective is
/// evaluated at the projection onto the box plus a quadratic penalty on the
/// distance to it, so the returned point is always feasible.
BoxMinimum minimize_in_box(const std::function<double(const std::vector<double>&)>& f,
                           std::vector<double> x0, const std::vector<double>& lo,
                           const std::vector<double>& hi, double step,
                           std::size_t max_iterations, double size_tol = 1e-6);

/// n points of the dim-dimensional Sobol sequence with a Cranley-Patterson
/// random shift (mod 1) drawn from rng. Row-major, n * dim values.
std::vector<double> shifted_sobol(std::size_t n, std::size_t dim, Rng& rng);

}  // namespace ilc::detail
