#include "box_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_qrng.h>

namespace ilc::detail {

namespace {

struct Problem {
  const std::function<double(const std::vector<double>&)>* f;
  const std::vector<double>* lo;
  const std::vector<double>* hi;
  std::vector<double> scratch;
};

double project(const Problem& p, const gsl_vector* v, std::vector<double>& out) {
  double penalty = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double raw = gsl_vector_get(v, i);
    const double c = std::clamp(raw, (*p.lo)[i], (*p.hi)[i]);
    penalty += (raw - c) * (raw - c);
    out[i] = c;
  }
  return penalty;
}

double trampoline(const gsl_vector* v, void* params) {
  auto* p = static_cast<Problem*>(params);
  const double penalty = project(*p, v, p->scratch);
  const double value = (*p->f)(p->scratch);
  if (!std::isfinite(value)) return std::numeric_limits<double>::max() / 4;
  return value + 1e3 * penalty;
}

struct MinimizerDeleter {
  void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};
struct VectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};

}  // namespace

BoxMinimum minimize_in_box(const std::function<double(const std::vector<double>&)>& f,
                           std::vector<double> x0, const std::vector<double>& lo,
                           const std::vector<double>& hi, double step,
                           std::size_t max_iterations, double size_tol) {
  const std::size_t n = x0.size();
  for (std::size_t i = 0; i < n; ++i) x0[i] = std::clamp(x0[i], lo[i], hi[i]);
  BoxMinimum best{x0, f(x0)};
  if (n == 0 || max_iterations == 0) return best;

  gsl_set_error_handler_off();
  Problem problem{&f, &lo, &hi, std::vector<double>(n)};
  gsl_multimin_function fn{&trampoline, n, &problem};

  std::unique_ptr<gsl_vector, VectorDeleter> x(gsl_vector_alloc(n));
  std::unique_ptr<gsl_vector, VectorDeleter> steps(gsl_vector_alloc(n));
  for (std::size_t i = 0; i < n; ++i) {
    gsl_vector_set(x.get(), i, x0[i]);
    // Step inward when starting on an upper bound.
    const double s = (x0[i] + step > hi[i]) ? -step : step;
    gsl_vector_set(steps.get(), i, s);
  }
  std::unique_ptr<gsl_multimin_fminimizer, MinimizerDeleter> m(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n));
  if (gsl_multimin_fminimizer_set(m.get(), &fn, x.get(), steps.get()) != GSL_SUCCESS)
    return best;

  for (std::size_t it = 0; it < max_iterations; ++it) {
    if (gsl_multimin_fminimizer_iterate(m.get()) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(m.get()), size_tol) == GSL_SUCCESS)
      break;
  }
  std::vector<double> xm(n);
  project(problem, gsl_multimin_fminimizer_x(m.get()), xm);
  const double v = f(xm);
  if (v < best.value) best = {std::move(xm), v};
  return best;
}

std::vector<double> shifted_sobol(std::size_t n, std::size_t dim, Rng& rng) {
  if (dim == 0) return {};
  if (dim > 40) throw std::invalid_argument("Sobol sequence supports at most 40 dimensions");
  std::unique_ptr<gsl_qrng, decltype(&gsl_qrng_free)> q(gsl_qrng_alloc(gsl_qrng_sobol, dim),
                                                        &gsl_qrng_free);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> shift(dim);
  for (auto& s : shift) s = unit(rng);
  std::vector<double> out(n * dim);
  for (std::size_t k = 0; k < n; ++k) {
    double* row = out.data() + k * dim;
    gsl_qrng_get(q.get(), row);
    for (std::size_t d = 0; d < dim; ++d) {
      row[d] += shift[d];
      if (row[d] >= 1.0) row[d] -= 1.0;
    }
  }
  return out;
}

}  // namespace ilc::detail
