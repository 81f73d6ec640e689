#include "ilc/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "box_search.hpp"
#include "ilc/errors.hpp"
#include "ilc/rng.hpp"

namespace ilc {

void ParamSpace::validate() const {
  if (axes.empty()) throw ConfigError("parameter space has no axes");
  for (const auto& ax : axes) {
    if (!(ax.lower < ax.upper) || !std::isfinite(ax.lower) || !std::isfinite(ax.upper))
      throw ConfigError(fmt::format("parameter '{}': lower bound must be < upper bound", ax.name));
  }
}

std::vector<double> ParamSpace::to_unit(std::span<const double> raw) const {
  std::vector<double> u(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i)
    u[i] = (raw[i] - axes[i].lower) / (axes[i].upper - axes[i].lower);
  return u;
}

std::vector<double> ParamSpace::from_unit(std::span<const double> unit) const {
  std::vector<double> r(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i)
    r[i] = axes[i].lower + unit[i] * (axes[i].upper - axes[i].lower);
  return r;
}

bool ParamSpace::contains(std::span<const double> raw) const {
  if (raw.size() != axes.size()) return false;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const double slack = 1e-12 * (axes[i].upper - axes[i].lower);
    if (!(raw[i] >= axes[i].lower - slack && raw[i] <= axes[i].upper + slack)) return false;
  }
  return true;
}

double objective_from_emd(double emd, double floor) { return std::log10(std::max(emd, floor)); }

double matern(double r, double nu) {
  if (nu == 0.5) return std::exp(-r);
  if (nu == 1.5) {
    const double a = std::sqrt(3.0) * r;
    return (1.0 + a) * std::exp(-a);
  }
  if (nu == 2.5) {
    const double a = std::sqrt(5.0) * r;
    return (1.0 + a + a * a / 3.0) * std::exp(-a);
  }
  throw ConfigError(fmt::format("unsupported Matern smoothness {}", nu));
}

// ---------------------------------------------------------------- GpModel

namespace {

double scaled_distance(std::span<const double> a, std::span<const double> b,
                       const std::vector<double>& ls) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double t = (a[d] - b[d]) / ls[d];
    s += t * t;
  }
  return std::sqrt(s);
}

}  // namespace

GpModel::GpModel(std::vector<Observation> observations, ParamSpace space, double nu,
                 GpHyperparameters hyper)
    : observations_(std::move(observations)), space_(std::move(space)), nu_(nu),
      hyper_(std::move(hyper)) {
  const std::size_t n = observations_.size();
  const std::size_t d = space_.dim();
  if (n == 0) throw TooFewObservations("GP needs at least one observation");
  if (hyper_.length_scales.size() != d)
    throw ConfigError("length-scale count does not match parameter dimension");
  if (!(hyper_.noise_variance > 0.0)) throw ConfigError("noise variance must be > 0");
  matern(0.0, nu_);  // validates nu

  x_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  best_ = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = space_.to_unit(observations_[i].params);
    for (std::size_t k = 0; k < d; ++k) x_(i, k) = u[k];
    y(i) = observations_[i].objective;
    best_ = std::min(best_, y(i));
  }
  y_mean_ = y.mean();
  const double var = (y.array() - y_mean_).square().mean();
  y_scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd ys = (y.array() - y_mean_) / y_scale_;

  Eigen::MatrixXd k(n, n);
  std::vector<double> ri(d), rj(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) ri[a] = x_(i, a);
    for (std::size_t j = 0; j <= i; ++j) {
      for (std::size_t a = 0; a < d; ++a) rj[a] = x_(j, a);
      const double v = kernel_unit(ri, rj);
      k(i, j) = v;
      k(j, i) = v;
    }
    k(i, i) += hyper_.noise_variance;
  }
  llt_.compute(k);
  if (llt_.info() != Eigen::Success) throw IllConditioned("kernel matrix is not positive definite");
  alpha_ = llt_.solve(ys);
  const Eigen::MatrixXd& l = llt_.matrixLLT();
  double log_det_half = 0.0;
  for (std::size_t i = 0; i < n; ++i) log_det_half += std::log(l(i, i));
  lml_ = -0.5 * ys.dot(alpha_) - log_det_half -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

double GpModel::kernel_unit(std::span<const double> a, std::span<const double> b) const {
  if (a.size() != b.size()) return 0.0;
  return hyper_.signal_variance * matern(scaled_distance(a, b, hyper_.length_scales), nu_);
}

double GpModel::prior_stddev() const { return std::sqrt(hyper_.signal_variance) * y_scale_; }

Prediction GpModel::predict_unit(std::span<const double> unit) const {
  const auto n = x_.rows();
  const std::size_t d = space_.dim();
  Eigen::VectorXd ks(n);
  std::vector<double> row(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) row[a] = x_(i, static_cast<Eigen::Index>(a));
    ks(i) = kernel_unit(unit, row);
  }
  const double mean_std = ks.dot(alpha_);
  const Eigen::VectorXd v = llt_.matrixL().solve(ks);
  const double var_std = std::max(0.0, hyper_.signal_variance - v.squaredNorm());
  return {y_mean_ + y_scale_ * mean_std, y_scale_ * std::sqrt(var_std)};
}

Prediction GpModel::predict(std::span<const double> raw) const {
  if (!space_.contains(raw)) throw OutOfBounds("query lies outside the parameter space");
  return predict_unit(space_.to_unit(raw));
}

// -------------------------------------------------------------------- fit

GpModel fit(std::span<const Observation> observations, const ParamSpace& space,
            const GpConfig& config) {
  space.validate();
  const std::size_t d = space.dim();
  if (observations.size() < std::max<std::size_t>(1, config.min_observations))
    throw TooFewObservations(fmt::format("GP fit needs at least {} observations, got {}",
                                         std::max<std::size_t>(1, config.min_observations),
                                         observations.size()));
  for (const auto& ob : observations) {
    if (!space.contains(ob.params)) throw OutOfBounds("observation lies outside the parameter space");
    if (!std::isfinite(ob.objective)) throw ConfigError("observation objective must be finite");
  }
  std::vector<Observation> obs(observations.begin(), observations.end());

  GpHyperparameters init = config.initial;
  if (init.length_scales.empty()) init.length_scales.assign(d, 0.3);

  // Duplicate inputs whose targets disagree by far more than the largest
  // admissible noise cannot be explained by the model.
  {
    double mean = 0.0;
    for (const auto& ob : obs) mean += ob.objective;
    mean /= static_cast<double>(obs.size());
    double var = 0.0;
    for (const auto& ob : obs) var += (ob.objective - mean) * (ob.objective - mean);
    var /= static_cast<double>(obs.size());
    const double scale = var > 1e-24 ? std::sqrt(var) : 1.0;
    const double noise = config.optimize ? config.noise_variance_max : init.noise_variance;
    const double limit = 8.0 * std::sqrt(2.0 * noise) * scale;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (obs[i].params == obs[j].params &&
            std::abs(obs[i].objective - obs[j].objective) > limit)
          throw IllConditioned("duplicate inputs with contradictory objectives");
      }
    }
  }

  if (!config.optimize) return GpModel(std::move(obs), space, config.nu, init);

  // Optimize log hyperparameters: [log l_1..l_d, log signal var, log noise var].
  std::vector<double> lo(d + 2), hi(d + 2);
  for (std::size_t k = 0; k < d; ++k) {
    lo[k] = std::log(config.length_scale_min);
    hi[k] = std::log(config.length_scale_max);
  }
  lo[d] = std::log(config.signal_variance_min);
  hi[d] = std::log(config.signal_variance_max);
  lo[d + 1] = std::log(config.noise_variance_min);
  hi[d + 1] = std::log(config.noise_variance_max);

  auto unpack = [d](const std::vector<double>& theta) {
    GpHyperparameters h;
    h.length_scales.resize(d);
    for (std::size_t k = 0; k < d; ++k) h.length_scales[k] = std::exp(theta[k]);
    h.signal_variance = std::exp(theta[d]);
    h.noise_variance = std::exp(theta[d + 1]);
    return h;
  };
  auto negative_lml = [&](const std::vector<double>& theta) {
    try {
      return -GpModel(obs, space, config.nu, unpack(theta)).log_marginal_likelihood();
    } catch (const IllConditioned&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<std::vector<double>> starts;
  {
    std::vector<double> t(d + 2);
    for (std::size_t k = 0; k < d; ++k) t[k] = std::log(init.length_scales[k]);
    t[d] = std::log(init.signal_variance);
    t[d + 1] = std::log(init.noise_variance);
    starts.push_back(t);
  }
  Rng rng = make_rng(config.seed, "gp-restarts");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t r = 0; r < config.restarts; ++r) {
    std::vector<double> t(d + 2);
    for (std::size_t k = 0; k < d + 2; ++k) t[k] = lo[k] + unit(rng) * (hi[k] - lo[k]);
    starts.push_back(t);
  }

  detail::BoxMinimum best{{}, std::numeric_limits<double>::infinity()};
  for (const auto& s : starts) {
    auto m = detail::minimize_in_box(negative_lml, s, lo, hi, 0.5, 300, 1e-5);
    if (m.value < best.value) best = std::move(m);
  }
  if (!std::isfinite(best.value)) throw IllConditioned("no admissible hyperparameters found");
  return GpModel(std::move(obs), space, config.nu, unpack(best.x));
}

// ----------------------------------------------------- expected improvement

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// log(z Phi(z) + phi(z)).
double log_h(double z) {
  if (z > -30.0) return std::log(z * normal_cdf(z) + normal_pdf(z));
  // Asymptotic expansion: h(z) = phi(z) / z^2 * (1 - 3/z^2 + 15/z^4 - 105/z^6 + ...).
  const double t2 = z * z;
  const double series = 1.0 - 3.0 / t2 + 15.0 / (t2 * t2) - 105.0 / (t2 * t2 * t2) +
                        945.0 / (t2 * t2 * t2 * t2);
  return -0.5 * t2 + std::log(kInvSqrt2Pi) - std::log(t2) + std::log(series);
}

}  // namespace

double log_expected_improvement(const Prediction& p, double best, double xi) {
  if (!(p.stddev > 0.0)) return -std::numeric_limits<double>::infinity();
  const double z = (best - p.mean - xi) / p.stddev;
  return std::log(p.stddev) + log_h(z);
}

double log_expected_improvement(const GpModel& model, std::span<const double> raw, double xi) {
  return log_expected_improvement(model.predict(raw), model.best_objective(), xi);
}

double expected_improvement(const GpModel& model, std::span<const double> raw, double xi) {
  const Prediction p = model.predict(raw);
  if (!(p.stddev > 0.0)) return 0.0;
  const double imp = model.best_objective() - p.mean - xi;
  const double z = imp / p.stddev;
  const double ei = imp * normal_cdf(z) + p.stddev * normal_pdf(z);
  return std::max(0.0, ei);
}

// ------------------------------------------------------------- box search

namespace {

// Minimizes f over the unit cube: scores the starting points, then polishes
// the best `refine` of them with bounded Nelder-Mead. Earlier points win ties.
std::vector<double> search_unit_cube(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<std::vector<double>> starts, std::size_t refine,
                                     std::size_t max_iterations) {
  const std::size_t d = starts.front().size();
  std::vector<double> score(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) score[i] = f(starts[i]);
  std::vector<std::size_t> order(starts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });

  std::vector<double> best_x = starts[order[0]];
  double best_v = score[order[0]];
  const std::vector<double> lo(d, 0.0), hi(d, 1.0);
  for (std::size_t r = 0; r < std::min(refine, order.size()); ++r) {
    auto m = detail::minimize_in_box(f, starts[order[r]], lo, hi, 0.02, max_iterations, 1e-7);
    if (m.value < best_v) {
      best_v = m.value;
      best_x = std::move(m.x);
    }
  }
  return best_x;
}

std::vector<std::vector<double>> candidate_points(const GpModel& model, std::size_t count,
                                                  std::uint64_t seed, const char* label) {
  const std::size_t d = model.space().dim();
  std::vector<std::vector<double>> pts;
  for (const auto& ob : model.observations()) pts.push_back(model.space().to_unit(ob.params));
  Rng rng = make_rng(seed, label);
  const auto sobol = detail::shifted_sobol(count, d, rng);
  for (std::size_t k = 0; k < count; ++k)
    pts.emplace_back(sobol.begin() + static_cast<std::ptrdiff_t>(k * d),
                     sobol.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
  return pts;
}

}  // namespace

std::vector<double> suggest_next(const GpModel& model, const ParamSpace& space, double xi,
                                 std::uint64_t seed, const SearchConfig& search,
                                 std::span<const std::vector<double>> exclude) {
  space.validate();
  const double best = model.best_objective();
  std::vector<std::vector<double>> banned;
  for (const auto& e : exclude) banned.push_back(space.to_unit(e));
  const double r2 = search.exclusion_radius * search.exclusion_radius;
  auto neg_log_ei = [&](const std::vector<double>& u) {
    for (const auto& b : banned) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) d2 += (u[k] - b[k]) * (u[k] - b[k]);
      if (d2 < r2) return std::numeric_limits<double>::max() / 4;
    }
    const double v = log_expected_improvement(model.predict_unit(u), best, xi);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::max() / 8;
  };
  // Training inputs go last here: EI is lowest there, and ties should favour
  // unexplored probes.
  auto pts = candidate_points(model, search.candidates, seed, "acquisition");
  std::rotate(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(model.observations().size()),
              pts.end());
  return space.from_unit(search_unit_cube(neg_log_ei, std::move(pts), search.refine,
                                          search.max_iterations));
}

std::vector<double> model_minimum(const GpModel& model, const ParamSpace& space,
                                  std::uint64_t seed, const SearchConfig& search) {
  space.validate();
  auto mean = [&](const std::vector<double>& u) { return model.predict_unit(u).mean; };
  auto pts = candidate_points(model, search.candidates, seed, "model-minimum");
  return space.from_unit(search_unit_cube(mean, std::move(pts), search.refine,
                                          search.max_iterations));
}

}  // namespace ilc
