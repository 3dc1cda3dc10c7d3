#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "resdiff/errors.hpp"
#include "resdiff/map_core.hpp"
#include "resdiff/minor_check.hpp"
#include "resdiff/process.hpp"

using namespace resdiff;

namespace {

// Composite Simpson rule on [a, b] with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n) {
  double h = (b - a) / n;
  double sum = f(a) + f(b);
  for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return sum * h / 3.0;
}

std::vector<int> random_tuple(std::mt19937_64& gen, std::size_t cells, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<int> sym(0, static_cast<int>(cells) - 1);
  std::vector<int> s(len(gen));
  for (auto& x : s) x = sym(gen);
  return s;
}

}  // namespace

TEST_CASE("F_* has unit mass per cube") {
  for (double a : {0.0, 3.0, -2.0}) {
    double m = simpson([](double x) { return f_star(std::span<const double>(&x, 1)); }, a, a + 1.0, 20'000);
    CHECK(std::abs(m - 1.0) < 1e-10);
  }
  double half = 0.5;
  CHECK(f_star(std::span<const double>(&half, 1)) == doctest::Approx(kFStarNorm1d));
}

TEST_CASE("F_{k,s} has unit mass and lives on its cylinder") {
  std::mt19937_64 gen(2024);
  for (auto map : {maps::doubling(), maps::asymmetric()}) {
    for (int trial = 0; trial < 20; ++trial) {
      auto s = random_tuple(gen, map.num_cells(), 6);
      std::int64_t k = static_cast<std::int64_t>(gen() % 7) - 3;
      auto cyl = cylinder_geometry(map, {k}, s);
      auto f = [&](double x) { return f_ks(map, {k}, s, std::span<const double>(&x, 1)); };
      double quad = simpson(f, cyl.lower[0], cyl.lower[0] + cyl.side, 20'000);
      CHECK(std::abs(quad - 1.0) < 1e-8);

      auto grid = bump_density(map, k, s, 1024);
      CHECK(std::abs(grid.mass() - 1.0) < 1e-8);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        double lo = grid.cell_lower(i), hi = lo + grid.width();
        if (hi <= cyl.lower[0] || lo >= cyl.lower[0] + cyl.side) CHECK(grid.values[i] == 0.0);
      }
      double outside = cyl.lower[0] + cyl.side + 1e-9;
      CHECK(f(outside) == 0.0);
      CHECK(f(cyl.lower[0] - 1e-9) == 0.0);
    }
  }
}

TEST_CASE("noise-free pushes move bumps along the shift") {
  auto a = maps::asymmetric();
  std::vector<int> s{1, 0, 1};
  const std::size_t G = 2048;
  auto pushed = push_density(a, bump_density(a, 0, s, G), 0.0);
  auto [k2, s2] = cylinder_shift(a, {0}, s);
  auto target = bump_density(a, k2[0], s2, G);
  auto wide = target.extended(pushed.first_cube, pushed.first_cube + static_cast<std::int64_t>(pushed.num_cubes) - 1);
  auto p = pushed.extended(wide.first_cube, wide.first_cube + static_cast<std::int64_t>(wide.num_cubes) - 1);
  double l1 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) l1 += std::abs(p.values[i] - wide.values[i]) * p.width();
  CHECK(l1 < 2.0 / G);
  CHECK(std::abs(pushed.mass() - 1.0) < 1e-9);

  auto noisy = push_density(a, bump_density(a, 0, s, G), 0.1);
  CHECK(std::abs(noisy.mass() - 1.0) < 1e-9);
  auto g = gaussian_density(0.3, 0.05, G);
  CHECK(std::abs(g.mass() - 1.0) < 1e-9);
  CHECK(std::abs(shift_mix(a, noisy).mass() - 1.0) < 1e-9);
}

TEST_CASE("bump chain ratios") {
  auto d = maps::doubling();
  std::vector<int> s{1, 0, 1, 0};
  auto clean = verify_bump_chain(d, 0, s, 0.0);
  for (double r : clean.step_ratio) CHECK(r == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(clean.mass_error < 1e-9);

  double prev = 2.0;
  for (double eps : {0.01, 0.02, 0.04, 0.06}) {
    auto r = verify_bump_chain(d, 0, s, eps);
    CHECK(r.beta_emp < prev);
    CHECK(r.beta_emp >= r.beta_theory);
    CHECK(r.mass_error < 1e-9);
    prev = r.beta_emp;
  }
  CHECK(clean.beta_theory == doctest::Approx(std::exp(-4.0 / 3.0)).epsilon(1e-15));

  std::vector<int> deep{1, 0, 1, 0, 1, 0};
  CHECK_THROWS_WITH_AS(verify_bump_chain(d, 0, deep, 0.05), doctest::Contains("HypothesisViolated"), Error);
}

TEST_CASE("defrag constant is stable under grid refinement") {
  auto d = maps::doubling();
  DoeblinOptions coarse, fine;
  coarse.cells_per_unit = 1024;
  fine.cells_per_unit = 2048;
  auto a = verify_doeblin(d, 0.5, 0.1, DoeblinStage::Defrag, coarse);
  auto b = verify_doeblin(d, 0.5, 0.1, DoeblinStage::Defrag, fine);
  CHECK(a.min_constant > 0.0);
  CHECK(a.min_constant <= 2.0 * b.min_constant);
  CHECK(b.min_constant <= 2.0 * a.min_constant);
}

TEST_CASE("one-step stage targets the cube of the deterministic orbit") {
  auto d = maps::doubling();
  for (double x : {0.3, 0.71}) {
    auto r = verify_doeblin(d, x, 0.1, DoeblinStage::OneStep);
    CHECK(r.theta == 4);
    auto orbit = deterministic_orbit(d, std::span<const double>(&x, 1), 1 + r.theta);
    CHECK(r.target_cube == static_cast<std::int64_t>(std::floor(orbit.back()[0])));
    CHECK(r.min_constant > 0.0);
    CHECK(std::abs(r.density.mass() - 1.0) < 1e-9);
  }
}

TEST_CASE("two-step constant is positive") {
  auto a = maps::asymmetric();
  DoeblinOptions opts;
  opts.cells_per_unit = 512;
  for (int i = 0; i < 10; ++i) {
    double x = 0.05 + 0.1 * i;
    auto r = verify_doeblin(a, x, 0.15, DoeblinStage::TwoStep, opts);
    CHECK_MESSAGE(r.min_constant > 0.0, "x = " << x);
  }
}

TEST_CASE("grid densities") {
  auto g = GridDensity::zeros(-1, 3, 4);
  CHECK(g.size() == 12);
  CHECK(g.cell_lower(0) == -1.0);
  g.values[5] = 4.0;
  CHECK(g.mass() == 1.0);
  auto [b, e] = g.cube_cells(0);
  CHECK(b == 4);
  CHECK(e == 8);
  CHECK(g.cube_masses() == std::vector<double>{0.0, 1.0, 0.0});
  g.trim();
  CHECK(g.first_cube == 0);
  CHECK(g.num_cubes == 1);
  std::ostringstream os;
  g.write_csv(os);
  CHECK(os.str().rfind("x,value\n", 0) == 0);
}
