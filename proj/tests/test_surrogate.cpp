#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ilc/controller.hpp"
#include "ilc/errors.hpp"
#include "ilc/rng.hpp"
#include "ilc/surrogate.hpp"
#include "oracles.hpp"

using namespace ilc;

namespace {

ParamSpace unit_space(std::size_t d) {
  ParamSpace s;
  for (std::size_t k = 0; k < d; ++k) s.axes.push_back({"p" + std::to_string(k), 0.0, 1.0});
  return s;
}

GpConfig fixed(std::vector<double> ls, double sv = 1.0, double nv = 1e-2) {
  GpConfig c;
  c.optimize = false;
  c.initial = {std::move(ls), sv, nv};
  return c;
}

oracle::DenseGp dense_of(const GpModel& m) {
  oracle::DenseGp o;
  const auto& obs = m.observations();
  const std::size_t d = m.space().dim();
  o.x.resize(static_cast<Eigen::Index>(obs.size()), static_cast<Eigen::Index>(d));
  o.y.resize(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto u = m.space().to_unit(obs[i].params);
    for (std::size_t k = 0; k < d; ++k) o.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = u[k];
    o.y(static_cast<Eigen::Index>(i)) = obs[i].objective;
  }
  o.length_scales = m.hyperparameters().length_scales;
  o.signal_variance = m.hyperparameters().signal_variance;
  o.noise_variance = m.hyperparameters().noise_variance;
  o.nu = m.nu();
  return o;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST_CASE("Matern closed forms agree with the Bessel form") {
  for (double nu : {0.5, 1.5, 2.5})
    for (double r : {0.0, 1e-3, 0.1, 0.7, 2.0, 6.0}) CHECK(matern(r, nu) == doctest::Approx(oracle::matern_bessel(r, nu)).epsilon(1e-10));
  CHECK_THROWS_AS(matern(0.3, 3.5), ConfigError);
}

TEST_CASE("parameter space normalization") {
  ParamSpace s{{{"sigma", 2, 20}, {"beta", 0.5, 5}}};
  const double raw[] = {11, 2.75};
  const auto u = s.to_unit(raw);
  CHECK(u[0] == doctest::Approx(0.5));
  CHECK(u[1] == doctest::Approx(0.5));
  const auto back = s.from_unit(u);
  CHECK(back[0] == doctest::Approx(11));
  CHECK(s.contains(raw));
  const double out[] = {1, 2};
  CHECK_FALSE(s.contains(out));
  const ParamSpace flat{{{"a", 1, 1}}};
  CHECK_THROWS_AS(flat.validate(), ConfigError);
}

TEST_CASE("objective transform") {
  CHECK(objective_from_emd(1e5) == doctest::Approx(5.0));
  CHECK(objective_from_emd(0.0) == 0.0);
  CHECK(objective_from_emd(0.0, 1e-3) == doctest::Approx(-3.0));
}

TEST_CASE("two observations are interpolated within the noise level") {
  const auto space = unit_space(1);
  const std::vector<Observation> obs{{{0.2}, 4.0}, {{0.7}, 5.0}};
  const auto m = fit(obs, space, fixed({0.3}, 1.0, 1e-4));
  for (const auto& o : obs) {
    const auto p = m.predict(o.params);
    CHECK(std::abs(p.mean - o.objective) < std::sqrt(1e-4) * m.target_scale());
  }
}

TEST_CASE("constant targets give a constant mean") {
  const auto space = unit_space(2);
  std::vector<Observation> obs;
  for (double a : {0.1, 0.5, 0.9})
    for (double b : {0.2, 0.8}) obs.push_back({{a, b}, 3.25});
  const auto m = fit(obs, space);
  for (double a : {0.0, 0.33, 1.0}) {
    const double q[] = {a, 1.0 - a};
    CHECK(m.predict(q).mean == doctest::Approx(3.25).epsilon(1e-12));
  }
}

TEST_CASE("quadratic data match the dense oracle") {
  const auto space = unit_space(1);
  std::vector<Observation> obs;
  for (double x : {0.05, 0.3, 0.5, 0.72, 0.95}) obs.push_back({{x}, (x - 0.4) * (x - 0.4)});
  const auto m = fit(obs, space);
  const auto o = dense_of(m);
  for (double q = 0.0; q <= 1.0; q += 0.0625) {
    const double raw[] = {q};
    const auto p = m.predict(raw);
    Eigen::RowVectorXd u(1);
    u << q;
    const auto [mu, sd] = o.predict(u);
    CHECK(rel(p.mean, mu) < 1e-8);
    CHECK(std::abs(p.stddev - sd) < 1e-8 * std::max(1.0, sd));
  }
}

TEST_CASE("random 1D and 2D datasets match the dense oracle") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + trial % 2;
    ParamSpace space;
    for (std::size_t k = 0; k < d; ++k) space.axes.push_back({"p", 10.0 * k, 10.0 * k + 5.0 + trial});
    const std::size_t n = 3 + trial % 20;
    std::vector<Observation> obs;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(d);
      for (std::size_t k = 0; k < d; ++k) x[k] = space.axes[k].lower + u01(rng) * (space.axes[k].upper - space.axes[k].lower);
      obs.push_back({x, 3.0 + std::sin(5 * u01(rng)) + 0.1 * u01(rng)});
    }
    GpConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    cfg.nu = std::array{0.5, 1.5, 2.5}[trial % 3];
    const auto m = fit(obs, space, cfg);
    const auto o = dense_of(m);
    for (int q = 0; q < 5; ++q) {
      std::vector<double> raw(d);
      Eigen::RowVectorXd uq(static_cast<Eigen::Index>(d));
      for (std::size_t k = 0; k < d; ++k) {
        uq(static_cast<Eigen::Index>(k)) = u01(rng);
        raw[k] = space.from_unit(std::vector<double>(d, uq(static_cast<Eigen::Index>(k))))[k];
      }
      const auto p = m.predict(raw);
      const auto [mu, sd] = o.predict(uq);
      CHECK(rel(p.mean, mu) < 1e-8);
      CHECK(std::abs(p.stddev - sd) <= 1e-8 * std::max(sd, m.prior_stddev()));
    }
  }
}

TEST_CASE("posterior stddev at and far from the data") {
  const auto space = unit_space(1);
  const std::vector<Observation> obs{{{0.0}, 1.0}, {{0.02}, 2.0}};
  const auto m = fit(obs, space, fixed({0.05}, 1.0, 1e-6));
  const auto at = m.predict(obs[0].params);
  CHECK(at.stddev <= std::sqrt(1e-6) * m.target_scale() * 1.01);
  const double far[] = {1.0};
  CHECK(m.predict(far).stddev == doctest::Approx(m.prior_stddev()).epsilon(0.01));
  const double outside[] = {1.5};
  CHECK_THROWS_AS(m.predict(outside), OutOfBounds);
}

TEST_CASE("adding an observation never raises the stddev") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto space = unit_space(2);
  std::vector<Observation> obs;
  for (int i = 0; i < 6; ++i) obs.push_back({{u01(rng), u01(rng)}, u01(rng)});
  const auto cfg = fixed({0.2, 0.3}, 1.0, 1e-3);
  const auto before = fit(obs, space, cfg);
  obs.push_back({{u01(rng), u01(rng)}, u01(rng)});
  // Same standardization scale so the comparison is in matched units.
  const GpModel after(obs, space, 2.5, before.hyperparameters());
  for (int q = 0; q < 200; ++q) {
    const double x[] = {u01(rng), u01(rng)};
    const double s0 = before.predict_unit(x).stddev / before.target_scale();
    const double s1 = after.predict_unit(x).stddev / after.target_scale();
    CHECK(s1 <= s0 + 1e-12);
  }
}

TEST_CASE("marginal likelihood fit improves on the starting point") {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto space = unit_space(1);
  std::vector<Observation> obs;
  for (int i = 0; i < 12; ++i) {
    const double x = u01(rng);
    obs.push_back({{x}, std::sin(6 * x)});
  }
  const auto start = fit(obs, space, fixed({0.3}));
  const auto best = fit(obs, space);
  CHECK(best.log_marginal_likelihood() >= start.log_marginal_likelihood());
  const auto& h = best.hyperparameters();
  CHECK(h.length_scales[0] >= 1e-2);
  CHECK(h.length_scales[0] <= 1e2);
  CHECK(h.noise_variance >= 1e-4);
  const auto again = fit(obs, space);
  CHECK(again.hyperparameters().length_scales == h.length_scales);
}

TEST_CASE("fit preconditions") {
  const auto space = unit_space(1);
  const std::vector<Observation> one{{{0.5}, 1.0}};
  CHECK_THROWS_AS(fit(one, space), TooFewObservations);
  const std::vector<Observation> outside{{{0.5}, 1.0}, {{1.5}, 2.0}};
  CHECK_THROWS_AS(fit(outside, space), OutOfBounds);
  const std::vector<Observation> clash{{{0.5}, 1.0}, {{0.5}, 9.0}, {{0.1}, 1.0}};
  CHECK_THROWS_AS(fit(clash, space, fixed({0.3}, 1.0, 1e-4)), IllConditioned);
  const std::vector<Observation> agree{{{0.5}, 1.0}, {{0.5}, 1.0001}, {{0.1}, 2.0}};
  CHECK_NOTHROW(fit(agree, space, fixed({0.3}, 1.0, 1e-4)));
}

TEST_CASE("expected improvement closed forms") {
  const double best = 2.0, xi = 0.1, s = 0.4;
  CHECK(log_expected_improvement(Prediction{best, 0.0}, best, xi) == -std::numeric_limits<double>::infinity());
  const Prediction p{best - xi - 3 * s, s};
  const double phi3 = std::exp(-4.5) / std::sqrt(2 * M_PI);
  const double Phi3 = 0.5 * std::erfc(-3 / std::sqrt(2.0));
  CHECK(std::exp(log_expected_improvement(p, best, xi)) == doctest::Approx(3 * s * Phi3 + s * phi3).epsilon(1e-12));
}

TEST_CASE("EI is zero where the posterior is certain") {
  const auto space = unit_space(1);
  const std::vector<Observation> obs{{{0.2}, 1.0}, {{0.8}, 2.0}};
  const auto m = fit(obs, space, fixed({0.3}, 1.0, 1e-4));
  // Far above every plausible improvement: EI underflows to exactly 0
  // while the log form stays finite.
  const double q[] = {0.8};
  CHECK(expected_improvement(m, q, 50.0) == 0.0);
  CHECK(std::isfinite(log_expected_improvement(m, q, 50.0)));
}

TEST_CASE("EI matches quadrature on random triples") {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto space = unit_space(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Observation> obs;
    for (int i = 0; i < 4 + trial % 6; ++i) obs.push_back({{u01(rng)}, 4 + u01(rng)});
    GpConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto m = fit(obs, space, cfg);
    const double q[] = {u01(rng)};
    const double xi = 0.3 * u01(rng);
    const auto p = m.predict(q);
    const double ei = expected_improvement(m, q, xi);
    CHECK(ei >= 0.0);
    CHECK(std::abs(ei - oracle::ei_quadrature(p.mean, p.stddev, m.best_objective(), xi)) < 1e-6);
  }
}

TEST_CASE("suggestion dominates random probes") {
  const auto space = unit_space(1);
  GpConfig cfg = fixed({0.2});
  cfg.min_observations = 1;
  const auto m = fit(std::vector<Observation>{{{0.5}, 3.0}}, space, cfg);
  const auto s = suggest_next(m, space, 0.1, 7);
  const double best = expected_improvement(m, s, 0.1);
  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double q[] = {u01(rng)};
    CHECK(best >= expected_improvement(m, q, 0.1));
  }
  CHECK(std::abs(s[0] - 0.5) > 0.3);
  CHECK(suggest_next(m, space, 0.1, 7) == s);
}

TEST_CASE("large xi explores the most uncertain point") {
  const auto space = unit_space(1);
  const std::vector<Observation> obs{{{0.0}, 3.0}, {{0.3}, 4.0}, {{1.0}, 3.5}};
  const auto m = fit(obs, space, fixed({0.15}, 1.0, 1e-4));
  const auto s = suggest_next(m, space, 100.0, 3);
  double best_x = 0.0, best_sd = -1.0;
  for (int i = 0; i <= 10000; ++i) {
    const double q[] = {i / 10000.0};
    const double sd = m.predict(q).stddev;
    if (sd > best_sd) {
      best_sd = sd;
      best_x = q[0];
    }
  }
  CHECK(s[0] == doctest::Approx(best_x).epsilon(0.01));
}

TEST_CASE("suggestion location is invariant to affine rescaling") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const ParamSpace a{{{"rho", 0.0, 1.0}, {"beta", 0.0, 1.0}}};
  const ParamSpace b{{{"rho", 15.0, 50.0}, {"beta", 0.5, 5.0}}};
  std::vector<Observation> oa, ob;
  for (int i = 0; i < 8; ++i) {
    const double x[] = {u01(rng), u01(rng)};
    const double y = u01(rng);
    oa.push_back({{x[0], x[1]}, y});
    ob.push_back({b.from_unit(x), 1e3 * y + 5.0});  // objective scaled by 1e3
  }
  const auto cfg = fixed({0.3, 0.2});
  const auto ma = fit(oa, a, cfg), mb = fit(ob, b, cfg);
  const auto sa = suggest_next(ma, a, 0.05, 9);
  const auto sb = suggest_next(mb, b, 0.05 * 1e3, 9);
  const auto ub = b.to_unit(sb);
  CHECK(ub[0] == doctest::Approx(sa[0]).epsilon(1e-6));
  CHECK(ub[1] == doctest::Approx(sa[1]).epsilon(1e-6));
}

TEST_CASE("posterior minimum of a bowl") {
  const ParamSpace space{{{"x", -1.0, 3.0}, {"y", 0.0, 2.0}}};
  std::vector<Observation> obs;
  for (double x = -1.0; x <= 3.0; x += 0.5)
    for (double y = 0.0; y <= 2.0; y += 0.5) obs.push_back({{x, y}, (x - 1.3) * (x - 1.3) + 2 * (y - 0.6) * (y - 0.6)});
  const auto m = fit(obs, space);
  const auto v = model_minimum(m, space, 1);
  CHECK(v[0] == doctest::Approx(1.3).epsilon(0.05));
  CHECK(v[1] == doctest::Approx(0.6).epsilon(0.05));
}

TEST_CASE("posterior minimum with a single observation") {
  const auto space = unit_space(2);
  GpConfig cfg = fixed({0.3, 0.3});
  cfg.min_observations = 1;
  const auto m = fit(std::vector<Observation>{{{0.25, 0.6}, 4.0}}, space, cfg);
  const auto v = model_minimum(m, space);
  CHECK(v[0] == doctest::Approx(0.25));
  CHECK(v[1] == doctest::Approx(0.6));
}

TEST_CASE("suggestion from the first rho-campaign state beats a dense scan") {
  CampaignConfig c;
  c.controlled.axes = {{"rho", 15.0, 50.0}};
  c.n_prior = 5;
  c.n_iterations = 1;
  c.seed = 1000;
  const auto r = run_campaign(c);
  const GpModel& m = r.models.front();
  const auto s = suggest_next(m, c.controlled, c.xi, derive_seed(c.seed, "acquisition", 0), c.search);
  const double at = expected_improvement(m, s, c.xi);
  double scan = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double q[] = {15.0 + 35.0 * i / 999.0};
    scan = std::max(scan, expected_improvement(m, q, c.xi));
  }
  CHECK(at >= scan - 1e-9);
  CHECK(r.history[5].params == s);
}

TEST_CASE("excluded points are never suggested") {
  const ParamSpace space{{{"rho", 15.0, 50.0}}};
  const std::vector<Observation> obs{{{20.0}, 4.0}, {{40.0}, 3.0}, {{45.0}, 3.5}};
  const auto m = fit(obs, space, fixed({0.2}));
  const auto free = suggest_next(m, space, 0.1, 5);
  const std::vector<std::vector<double>> ban{free};
  SearchConfig sc;
  sc.exclusion_radius = 0.05;
  const auto moved = suggest_next(m, space, 0.1, 5, sc, ban);
  CHECK(std::abs(moved[0] - free[0]) >= 0.05 * 35.0);
  CHECK(space.contains(moved));
}
