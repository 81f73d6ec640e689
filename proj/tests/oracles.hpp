// Independent reference implementations used only by the tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_sf_bessel.h>
#include <gsl/gsl_sf_gamma.h>

#include "ilc/embedding.hpp"

namespace oracle {

// Minimum-cost perfect matching on a square matrix (Hungarian method with
// potentials, O(n^3)).
inline double assignment_min(const std::vector<std::vector<double>>& c) {
  const std::size_t n = c.size();
  if (n == 0) return 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += c[p[j] - 1][j - 1];
  return total;
}

// Each unit of mass becomes one node; the transportation LP has an integral
// optimum, so the assignment optimum equals it.
inline std::vector<std::size_t> expand_units(const std::vector<std::int64_t>& mass) {
  std::vector<std::size_t> units;
  for (std::size_t i = 0; i < mass.size(); ++i)
    for (std::int64_t k = 0; k < mass[i]; ++k) units.push_back(i);
  return units;
}

inline double transport_by_assignment(const std::vector<std::int64_t>& supply,
                                      const std::vector<std::int64_t>& demand,
                                      const std::vector<std::vector<double>>& cost) {
  const auto a = expand_units(supply), b = expand_units(demand);
  std::vector<std::vector<double>> c(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) c[i][j] = cost[a[i]][b[j]];
  return assignment_min(c);
}

// Exhaustive search over all matchings of the unit expansion.
inline double transport_by_permutation(const std::vector<std::int64_t>& supply,
                                       const std::vector<std::int64_t>& demand,
                                       const std::vector<std::vector<double>>& cost) {
  const auto a = expand_units(supply);
  auto b = expand_units(demand);
  std::sort(b.begin(), b.end());
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += cost[a[i]][b[i]];
    best = std::min(best, s);
  } while (std::next_permutation(b.begin(), b.end()));
  return best;
}

// Ground distances between the cells of a 2D grid, row-major.
inline std::vector<std::vector<double>> grid_costs(const ilc::GridSpec& g) {
  const std::size_t nx = g.axes[0].bins, ny = g.axes[1].bins;
  std::vector<std::vector<double>> c(nx * ny, std::vector<double>(nx * ny));
  for (std::size_t p = 0; p < nx * ny; ++p) {
    for (std::size_t q = 0; q < nx * ny; ++q) {
      const double dx = g.axes[0].center(p / ny) - g.axes[0].center(q / ny);
      const double dy = g.axes[1].center(p % ny) - g.axes[1].center(q % ny);
      c[p][q] = std::hypot(dx, dy);
    }
  }
  return c;
}

inline double emd(const ilc::BinnedPdf& f, const ilc::BinnedPdf& g) {
  std::vector<std::int64_t> a, b;
  for (double v : f.counts) a.push_back(std::llround(v));
  for (double v : g.counts) b.push_back(std::llround(v));
  return transport_by_assignment(a, b, grid_costs(f.grid));
}

// General Matern correlation through the modified Bessel function.
inline double matern_bessel(double r, double nu) {
  if (r == 0.0) return 1.0;
  const double a = std::sqrt(2.0 * nu) * r;
  if (a > 700.0) return 0.0;
  return std::pow(2.0, 1.0 - nu) / gsl_sf_gamma(nu) * std::pow(a, nu) * gsl_sf_bessel_Knu(nu, a);
}

struct DenseGp {
  Eigen::MatrixXd x;  // unit-cube inputs
  Eigen::VectorXd y;  // raw objectives
  std::vector<double> length_scales;
  double signal_variance = 1.0;
  double noise_variance = 1e-2;
  double nu = 2.5;

  double kernel(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const {
    double s = 0.0;
    for (Eigen::Index d = 0; d < a.size(); ++d) {
      const double t = (a(d) - b(d)) / length_scales[static_cast<std::size_t>(d)];
      s += t * t;
    }
    return signal_variance * matern_bessel(std::sqrt(s), nu);
  }

  // Posterior of the latent function with targets standardized by their
  // mean and population standard deviation; solved with a full-pivot LU
  // rather than a Cholesky factorization.
  std::pair<double, double> predict(const Eigen::RowVectorXd& q) const {
    const Eigen::Index n = x.rows();
    const double mean = y.mean();
    const double var = (y.array() - mean).square().mean();
    const double scale = var > 1e-24 ? std::sqrt(var) : 1.0;
    const Eigen::VectorXd ys = (y.array() - mean) / scale;
    Eigen::MatrixXd k(n, n);
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) k(i, j) = kernel(x.row(i), x.row(j));
      k(i, i) += noise_variance;
      ks(i) = kernel(q, x.row(i));
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
    const double mu = ks.dot(lu.solve(ys));
    const double v = kernel(q, q) - ks.dot(lu.solve(ks));
    return {mean + scale * mu, scale * std::sqrt(std::max(0.0, v))};
  }
};

// E[max(best - xi - Y, 0)] for Y ~ N(mu, sd^2), by adaptive quadrature over
// the improvement variable.
inline double ei_quadrature(double mu, double sd, double best, double xi) {
  struct P {
    double mu, sd, target;
  } p{mu, sd, best - xi};
  gsl_function f;
  f.function = [](double y, void* params) {
    const auto* q = static_cast<P*>(params);
    const double z = (y - q->mu) / q->sd;
    return (q->target - y) * std::exp(-0.5 * z * z) / (q->sd * std::sqrt(2.0 * M_PI));
  };
  f.params = &p;
  gsl_integration_workspace* w = gsl_integration_workspace_alloc(1000);
  double result = 0.0, err = 0.0;
  gsl_set_error_handler_off();
  gsl_integration_qagil(&f, p.target, 1e-13, 1e-11, 1000, w, &result, &err);
  gsl_integration_workspace_free(w);
  return result;
}

}  // namespace oracle
