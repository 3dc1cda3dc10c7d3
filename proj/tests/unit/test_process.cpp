#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "resdiff/errors.hpp"
#include "resdiff/map_core.hpp"
#include "resdiff/process.hpp"

using namespace resdiff;

namespace {

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("step with injected noise") {
  auto d = maps::doubling();
  double x = 0.3, xi = 0.7;
  auto y = step_with_noise(d, std::span<const double>(&x, 1), 0.1, std::span<const double>(&xi, 1));
  CHECK(y[0] == doctest::Approx(0.67).epsilon(1e-14));

  ShearMap shear;
  Point p{0.0, 0.25};
  Point zero{0.0, 0.0};
  auto q = step_with_noise(shear, p, 0.5, zero);
  CHECK(q[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(0.25).epsilon(1e-14));

  NoiseStream noise(1, 0);
  auto det = step(d, std::span<const double>(&x, 1), 0.0, noise);
  CHECK(det[0] == doctest::Approx(0.6));
  CHECK(noise.counter() == 0);
}

TEST_CASE("deterministic orbits") {
  auto d = maps::doubling();
  double x = 1.0 / 3.0;
  auto orbit = deterministic_orbit(d, std::span<const double>(&x, 1), 3);
  REQUIRE(orbit.size() == 3);
  CHECK(orbit[0][0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(orbit[1][0] == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(orbit[2][0] == doctest::Approx(5.0 / 3.0).epsilon(1e-14));
  CHECK(deterministic_orbit(d, std::span<const double>(&x, 1), 0).empty());

  auto a = maps::asymmetric();
  double zero = 0.0;
  for (const auto& p : deterministic_orbit(a, std::span<const double>(&zero, 1), 10)) CHECK(p[0] == 0.0);
}

TEST_CASE("one-step ensemble moments") {
  auto d = maps::doubling();
  const double eps = 0.1;
  const std::size_t m = 40'000;
  EnsembleOptions opts;
  opts.directions = {{1.0}};
  auto r = simulate_ensemble(d, InitialDistribution::delta({0.3}), eps, 1, m, 17, opts);
  REQUIRE(r.moments.size() == 1);
  const auto& mo = r.moments[0];
  double se_mean = eps / std::sqrt(static_cast<double>(m));
  CHECK(std::abs(mo.mean[0] - 0.6) <= 3.0 * se_mean);
  double se_var = eps * eps * std::sqrt(2.0 / static_cast<double>(m));
  CHECK(std::abs(mo.covariance(0, 0) - eps * eps) <= 3.0 * se_var);
  CHECK(mo.direction_variance[0] == doctest::Approx(mo.covariance(0, 0)).epsilon(1e-12));

  EnsembleOptions at0;
  at0.observe_times = {0};
  auto r0 = simulate_ensemble(d, InitialDistribution::delta({0.3}), eps, 0, 100, 17, at0);
  CHECK(r0.moments[0].covariance(0, 0) == 0.0);
}

TEST_CASE("ensemble results do not depend on the thread count") {
  auto a = maps::asymmetric();
  EnsembleOptions one, four;
  one.observe_times = four.observe_times = {5, 20};
  one.directions = four.directions = {{1.0}};
  four.threads = 4;
  auto r1 = simulate_ensemble(a, InitialDistribution::uniform(1), 0.1, 20, 3000, 99, one);
  auto r4 = simulate_ensemble(a, InitialDistribution::uniform(1), 0.1, 20, 3000, 99, four);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(r1.moments[t].mean[0] == r4.moments[t].mean[0]);
    CHECK(r1.moments[t].covariance(0, 0) == r4.moments[t].covariance(0, 0));
    CHECK(r1.moments[t].direction_variance_se[0] == r4.moments[t].direction_variance_se[0]);
  }
}

TEST_CASE("one-step noise passes a Kolmogorov-Smirnov test") {
  auto d = maps::doubling();
  const double eps = 0.2;
  const std::size_t m = 5000;
  EnsembleOptions opts;
  opts.keep_paths = true;
  auto r = simulate_ensemble(d, InitialDistribution::delta({0.3}), eps, 1, m, 4, opts);
  std::vector<double> z;
  for (const auto& path : r.paths) z.push_back((path[1][0] - 0.6) / eps);
  std::sort(z.begin(), z.end());
  double dmax = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double f = normal_cdf(z[i]);
    dmax = std::max({dmax, f - static_cast<double>(i) / m, static_cast<double>(i + 1) / m - f});
  }
  // 1.63 / sqrt(m) is the 1% critical value
  CHECK(dmax < 1.63 / std::sqrt(static_cast<double>(m)));
}

TEST_CASE("trace files round trip") {
  auto d = maps::doubling();
  EnsembleOptions opts;
  opts.keep_paths = true;
  auto r = simulate_ensemble(d, InitialDistribution::uniform(1), 0.1, 7, 5, 3, opts);
  std::stringstream ss;
  write_trace(ss, r.paths);
  CHECK(ss.str().size() == 8 + 24 + 5 * 8 * 8);
  auto back = read_trace(ss);
  CHECK(back == r.paths);

  std::stringstream junk("not a trace file");
  CHECK_THROWS_AS(read_trace(junk), Error);
}

TEST_CASE("defragmented chain bookkeeping") {
  auto d = maps::doubling();
  double x = 0.3;
  auto tr = simulate_z(d, std::span<const double>(&x, 1), 0.1, 200, 5, 0, true);
  REQUIRE(tr.rows.size() == 201);
  CHECK(tr.rows[1].big_n == 6);  // theta = 4 everywhere at eps = 0.1
  CHECK(tr.x_path.size() == tr.rows.back().big_n + 1);

  for (std::size_t k = 1; k < tr.rows.size(); ++k) {
    const auto& prev = tr.rows[k - 1];
    const auto& row = tr.rows[k];
    // Z_n and X_{N_n} differ by a lattice vector, exactly
    CHECK(row.z.frac == row.x.frac);
    CHECK(row.z.cube[0] + row.shift_sum[0] == row.x.cube[0]);
    std::size_t theta = theta_eps(d, prev.x.frac, 0.1);
    CHECK(row.big_n - prev.big_n == 2 + theta);
    CHECK(row.big_n - prev.big_n <= 2 + 4);
    auto xn = tr.x_path[row.big_n];
    CHECK(xn[0] == doctest::Approx(row.x.to_point()[0]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(simulate_z(d, std::span<const double>(&x, 1), 0.0, 5, 1), Error);
}

TEST_CASE("defragmenting shifts follow the cell volumes") {
  auto a = maps::asymmetric();
  const std::size_t m = 20'000;
  std::size_t ones = 0;
  NoiseStream u(8, 0, 0, StreamDomain::Shift);
  for (std::size_t i = 0; i < m; ++i) ones += draw_shift(a, u.uniform())[0] == 1;
  // P(I = 1) = |E_2| = 2/3
  double p = 2.0 / 3.0;
  CHECK(std::abs(static_cast<double>(ones) / m - p) <= 4.0 * std::sqrt(p * (1 - p) / m));
  CHECK(draw_shift(a, 0.0) == LatticeVec{0});
  CHECK(draw_shift(a, 0.999) == LatticeVec{1});
}

TEST_CASE("defragmented chain commutes with lattice shifts") {
  auto d = maps::doubling();
  double x = 0.375, x3 = 3.375;
  auto a = simulate_z(d, std::span<const double>(&x, 1), 0.05, 50, 12);
  auto b = simulate_z(d, std::span<const double>(&x3, 1), 0.05, 50, 12);
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    CHECK(b.rows[k].z.cube[0] == a.rows[k].z.cube[0] + 3);
    CHECK(b.rows[k].z.frac == a.rows[k].z.frac);
    CHECK(b.rows[k].big_n == a.rows[k].big_n);
  }
}

TEST_CASE("noiseless orbits from a uniform start do not collapse") {
  auto d = maps::doubling();
  EnsembleOptions opts;
  opts.observe_times = {100, 200};
  opts.directions = {{1.0}};
  auto r = simulate_ensemble(d, InitialDistribution::uniform(1), 0.0, 200, 20'000, 6, opts);
  // X_n - X_0 is a sum of n fair bits
  double var100 = r.moments[0].covariance(0, 0), var200 = r.moments[1].covariance(0, 0);
  CHECK(var100 == doctest::Approx(25.0 + 1.0 / 12.0).epsilon(0.05));
  CHECK((var200 - var100) / 100.0 == doctest::Approx(0.25).epsilon(0.15));

  auto delta = simulate_ensemble(d, InitialDistribution::delta({1.0 / 3.0}), 0.0, 3, 4, 6);
  CHECK(delta.moments[0].mean[0] == doctest::Approx(5.0 / 3.0).epsilon(1e-14));
  CHECK(delta.moments[0].covariance(0, 0) == 0.0);
}
