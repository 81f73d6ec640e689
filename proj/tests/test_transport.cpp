#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ilc/errors.hpp"
#include "ilc/parallel.hpp"
#include "ilc/transport.hpp"
#include "oracles.hpp"

using namespace ilc;

namespace {

GridSpec unit_grid(std::size_t n, double spacing = 1.0) {
  const double hi = spacing * static_cast<double>(n);
  return GridSpec{{{0.0, hi, n}, {0.0, hi, n}}};
}

BinnedPdf pdf(const GridSpec& g, std::vector<double> counts) {
  BinnedPdf p;
  p.grid = g;
  p.total_mass = std::accumulate(counts.begin(), counts.end(), 0.0);
  p.counts = std::move(counts);
  return p;
}

// Random histogram with exactly `mass` units spread over the cells.
BinnedPdf random_pdf(const GridSpec& g, int mass, std::mt19937_64& rng) {
  std::vector<double> c(g.cell_count(), 0.0);
  std::uniform_int_distribution<std::size_t> cell(0, c.size() - 1);
  for (int k = 0; k < mass; ++k) c[cell(rng)] += 1.0;
  return pdf(g, std::move(c));
}

}  // namespace

TEST_CASE("identical histograms cost nothing and keep their mass in place") {
  const auto g = unit_grid(3);
  const auto f = pdf(g, {3, 0, 1, 0, 2, 0, 0, 0, 4});
  const auto [cost, plan] = emd_with_plan(f, f);
  CHECK(cost == 0.0);
  for (const auto& m : plan.moves) CHECK(m.source == m.target);
}

TEST_CASE("single unit moved by a 3-4-5 offset") {
  const auto g = unit_grid(5);
  std::vector<double> a(25, 0.0), b(25, 0.0);
  a[0] = 1;
  b[3 * 5 + 4] = 1;
  CHECK(emd(pdf(g, a), pdf(g, b)) == doctest::Approx(5.0));
}

TEST_CASE("two-bin swap") {
  const GridSpec g{{{0.0, 2.0, 2}, {0.0, 1.0, 1}}};
  const auto [cost, plan] = emd_with_plan(pdf(g, {1, 0}), pdf(g, {0, 1}));
  CHECK(cost == doctest::Approx(1.0));
  REQUIRE(plan.moves.size() == 1);
  CHECK(plan.moves[0].mass == 1.0);
  CHECK(plan.moves[0].source == BinIndex{0, 0});
  CHECK(plan.moves[0].target == BinIndex{1, 0});
}

TEST_CASE("fixed cases against an interior-point LP optimum") {
  // Values from an independent LP solve of the full transportation program.
  struct Case {
    std::size_t n;
    std::vector<double> f, g;
    double expected;
  };
  const std::vector<Case> cases{
      {3, {3, 0, 1, 0, 2, 0, 0, 0, 4}, {0, 1, 0, 5, 0, 1, 2, 0, 1}, 11.0},
      {3, {7, 1, 0, 0, 0, 2, 3, 0, 5}, {1, 2, 3, 4, 0, 1, 2, 3, 2}, 13.0},
      {3, {0, 0, 0, 0, 9, 0, 0, 0, 0}, {1, 1, 1, 1, 1, 1, 1, 1, 1}, 9.65685424949238},
      {4, {5, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 3}, {0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0, 0, 5, 0, 0, 0}, 24.0},
  };
  for (const auto& c : cases) {
    const auto g = unit_grid(c.n);
    CHECK(emd(pdf(g, c.f), pdf(g, c.g)) == doctest::Approx(c.expected).epsilon(1e-12));
  }
}

TEST_CASE("random small histograms match the assignment and permutation oracles") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + trial % 3;
    const int mass = 1 + trial % 7;
    const auto g = unit_grid(n, 0.5 + 0.25 * (trial % 4));
    const auto f = random_pdf(g, mass, rng), h = random_pdf(g, mass, rng);
    const double got = emd(f, h);
    CHECK(got == doctest::Approx(oracle::emd(f, h)).epsilon(1e-9));

    std::vector<std::int64_t> a, b;
    for (double v : f.counts) a.push_back(std::llround(v));
    for (double v : h.counts) b.push_back(std::llround(v));
    CHECK(got == doctest::Approx(oracle::transport_by_permutation(a, b, oracle::grid_costs(g))).epsilon(1e-9));
  }
}

TEST_CASE("plan marginals reproduce both histograms") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = unit_grid(3 + trial % 3);
    const auto f = random_pdf(g, 20, rng), h = random_pdf(g, 20, rng);
    const auto [cost, plan] = emd_with_plan(f, h);
    std::vector<double> out(f.counts.size(), 0.0), in(h.counts.size(), 0.0);
    double total = 0.0;
    const std::size_t ny = g.axes[1].bins;
    for (const auto& m : plan.moves) {
      CHECK(m.mass > 0.0);
      out[m.source.i * ny + m.source.j] += m.mass;
      in[m.target.i * ny + m.target.j] += m.mass;
      total += m.mass * std::hypot(g.axes[0].center(m.source.i) - g.axes[0].center(m.target.i),
                                   g.axes[1].center(m.source.j) - g.axes[1].center(m.target.j));
    }
    CHECK(out == f.counts);
    CHECK(in == h.counts);
    CHECK(total == doctest::Approx(cost).epsilon(1e-12));
    CHECK(plan.cost == cost);
  }
}

TEST_CASE("metric properties on random triples") {
  std::mt19937_64 rng(17);
  const auto g = unit_grid(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_pdf(g, 12, rng), b = random_pdf(g, 12, rng), c = random_pdf(g, 12, rng);
    const double ab = emd(a, b), ba = emd(b, a), bc = emd(b, c), ac = emd(a, c);
    CHECK(ab >= 0.0);
    CHECK(ab == ba);
    CHECK(emd(a, a) == 0.0);
    CHECK((ab > 0.0) == (a.counts != b.counts));
    CHECK(ac <= ab + bc + 1e-9 * (ab + bc));
  }
}

TEST_CASE("scaling the grid scales the distance") {
  std::mt19937_64 rng(23);
  const auto g1 = unit_grid(4), g3 = unit_grid(4, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_pdf(g1, 15, rng), b = random_pdf(g1, 15, rng);
    const double base = emd(a, b);
    const double scaled = emd(pdf(g3, a.counts), pdf(g3, b.counts));
    CHECK(scaled == doctest::Approx(3.0 * base).epsilon(1e-12));
  }
}

TEST_CASE("full 20x20 grid against the assignment oracle") {
  std::mt19937_64 rng(29);
  const GridSpec g{{{-20.0, 20.0, 20}, {-20.0, 20.0, 20}}};
  for (int trial = 0; trial < 3; ++trial) {
    const auto a = random_pdf(g, 150, rng), b = random_pdf(g, 150, rng);
    CHECK(emd(a, b) == doctest::Approx(oracle::emd(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("transportation problems with arbitrary costs and ties") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> small(0, 4);
  for (int trial = 0; trial < 80; ++trial) {
    const std::size_t m = 1 + trial % 5, n = 1 + (trial / 5) % 5;
    std::vector<std::int64_t> a(m), b(n, 0);
    for (auto& v : a) v = small(rng);
    std::int64_t total = std::accumulate(a.begin(), a.end(), std::int64_t{0});
    for (std::int64_t k = 0; k < total; ++k) ++b[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)];
    // Integer costs produce many degenerate ties.
    std::vector<double> c(m * n);
    std::vector<std::vector<double>> cc(m, std::vector<double>(n));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] = cc[i][j] = small(rng);
    const auto sol = solve_transport(a, b, c);
    CHECK(sol.cost == doctest::Approx(oracle::transport_by_assignment(a, b, cc)).epsilon(1e-12));
    std::vector<std::int64_t> ra(m, 0), rb(n, 0);
    for (const auto& fl : sol.flows) {
      ra[fl.source] += fl.mass;
      rb[fl.target] += fl.mass;
    }
    CHECK(ra == a);
    CHECK(rb == b);
  }
}

TEST_CASE("input errors") {
  const auto g = unit_grid(2);
  CHECK_THROWS_AS(emd(pdf(g, {1, 0, 0, 0}), pdf(unit_grid(2, 2.0), {0, 1, 0, 0})), GridMismatch);
  CHECK_THROWS_AS(emd(pdf(g, {1, 0, 0, 0}), pdf(g, {0, 1, 1, 0})), MassMismatch);
  CHECK_THROWS_AS(emd(pdf(g, {0.5, 0.5, 0, 0}), pdf(g, {0, 1, 0, 0})), MassMismatch);
  const std::int64_t a[] = {2}, b[] = {1};
  const double c[] = {1.0};
  CHECK_THROWS_AS(solve_transport(a, b, c), MassMismatch);
}

TEST_CASE("concurrent solves agree with sequential ones") {
  std::mt19937_64 rng(37);
  const auto g = unit_grid(6);
  std::vector<BinnedPdf> fs, gs;
  for (int k = 0; k < 16; ++k) {
    fs.push_back(random_pdf(g, 40, rng));
    gs.push_back(random_pdf(g, 40, rng));
  }
  std::vector<double> par(16), seq(16);
  parallel_for(16, [&](std::size_t k) { par[k] = emd(fs[k], gs[k]); }, 4);
  for (std::size_t k = 0; k < 16; ++k) seq[k] = emd(fs[k], gs[k]);
  CHECK(par == seq);
}
