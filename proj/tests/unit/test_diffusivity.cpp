#include <doctest.h>

#include <cmath>
#include <sstream>

#include "resdiff/diffusivity.hpp"
#include "resdiff/errors.hpp"
#include "resdiff/map_core.hpp"
#include "resdiff/torus_transfer.hpp"

using namespace resdiff;

TEST_CASE("lattice distributions") {
  auto w = LatticeDistribution::from_exact(1, {{{0}, Rational(1, 4)}, {{2}, Rational(3, 4)}});
  CHECK(w.total() == doctest::Approx(1.0));
  CHECK(w.at({2}) == 0.75);
  CHECK(w.at({1}) == 0.0);
  CHECK(w.mean()(0) == doctest::Approx(1.5));
  CHECK(w.covariance()(0, 0) == doctest::Approx(0.75));
  REQUIRE(w.exact_covariance());
  CHECK((*w.exact_covariance())[0] == Rational(3, 4));
  auto s = w.shifted({-1});
  CHECK(s.at({-1}) == 0.25);
  CHECK(s.covariance()(0, 0) == doctest::Approx(0.75));
}

TEST_CASE("one-step cube laws and D_w0") {
  auto one = one_step_cube_distribution(maps::doubling(), {0});
  CHECK(one.at({0}) == 0.5);
  CHECK(one.at({1}) == 0.5);
  CHECK(one_step_cube_distribution(maps::doubling(), {4}).at({5}) == 0.5);

  auto dd = d_w0(maps::doubling());
  REQUIRE(dd.exact);
  CHECK((*dd.exact)[0] == Rational(1, 4));
  auto da = d_w0(maps::asymmetric());
  REQUIRE(da.exact);
  CHECK((*da.exact)[0] == Rational(2, 9));
  CHECK(d_w0(maps::confined_doubling()).value.norm() == 0.0);

  auto dq = d_w0(maps::quadrant());
  CHECK(dq.value.rows() == 2);
  CHECK((dq.value - dq.value.transpose()).norm() == 0.0);
}

TEST_CASE("w-check for the doubling map is binomial") {
  double z = 0.0;
  auto w = w_check_distribution(maps::doubling(), std::span<const double>(&z, 1), 0.1, DistributionMode::Exact);
  REQUIRE(w.exact);
  const Rational binom[] = {Rational(1, 32), Rational(5, 32), Rational(10, 32), Rational(10, 32), Rational(5, 32),
                            Rational(1, 32)};
  for (int k = 0; k <= 5; ++k) CHECK(w.at({k}) == doctest::Approx(binom[k].to_double()).epsilon(1e-15));
  REQUIRE(w.exact_covariance());
  CHECK((*w.exact_covariance())[0] == Rational(5, 4));

  auto dw = d_w_check(maps::doubling(), 0.1);
  CHECK(dw.theta_bar == 4.0);
  REQUIRE(dw.value.exact);
  CHECK((*dw.value.exact)[0] == Rational(5, 4));
  CHECK(dw.discrepancy < 1e-14);
}

TEST_CASE("w-check mean obeys Wald's identity") {
  auto a = maps::asymmetric();
  double z = 0.0;
  for (double eps : {0.3, 0.1, 0.05}) {
    auto w = w_check_distribution(a, std::span<const double>(&z, 1), eps, DistributionMode::Exact);
    double tb = theta_bar(a, eps, ThetaMode::Exact).value;
    CHECK(w.total() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(w.mean()(0) == doctest::Approx((1.0 + tb) * 2.0 / 3.0).epsilon(1e-12));

    WCheckOptions mc;
    mc.samples = 100'000;
    auto wm = w_check_distribution(a, std::span<const double>(&z, 1), eps, DistributionMode::MonteCarlo, mc);
    double sd = std::sqrt(w.covariance()(0, 0) / static_cast<double>(mc.samples));
    CHECK(std::abs(wm.mean()(0) - w.mean()(0)) <= 4.0 * sd);
  }
  double z7 = 7.5;
  auto moved = w_check_distribution(a, std::span<const double>(&z7, 1), 0.1, DistributionMode::Exact);
  auto base = w_check_distribution(a, std::span<const double>(&z, 1), 0.1, DistributionMode::Exact);
  CHECK(moved.mean()(0) == doctest::Approx(base.mean()(0) + 7.0).epsilon(1e-13));
}

TEST_CASE("shear map: the transverse rate is the noise variance") {
  ShearMap shear;
  Point v{0.0, 1.0};
  const double eps = 0.2;
  auto r = variance_rate_mc(shear, eps, v, 40, 20'000, 3);
  CHECK(std::abs(r.rate - eps * eps) <= 4.0 * r.se);
  CHECK(r.se > 0.0);
}

TEST_CASE("Monte Carlo rate agrees with the transfer operator rate") {
  auto a = maps::asymmetric();
  const double eps = 0.1;
  double v = 1.0;
  auto k = build_displacement_kernel(a, eps, UlamGrid(1, 1024));
  double kv = kv_rate(k, corrector_solve(k, CorrectorMode::Linear), std::span<const double>(&v, 1));
  RateOptions opts;
  opts.threads = 4;
  auto r = variance_rate_mc(a, eps, std::span<const double>(&v, 1), 200, 40'000, 21, opts);
  CHECK_MESSAGE(std::abs(r.rate - kv) <= 4.0 * r.se + 0.02 * kv, "mc " << r.rate << " +- " << r.se << " kv " << kv);
}

TEST_CASE("sweep output is deterministic") {
  auto d = maps::doubling();
  double v = 1.0;
  SweepBudget b;
  b.trajectories = 2000;
  b.n_per_log = 20;
  b.seed = 5;
  b.grid_cells = 128;
  b.batches = 8;
  auto run = [&](int threads) {
    SweepBudget bt = b;
    bt.threads = threads;
    auto rep = residual_sweep(d, {0.2, 0.1}, std::span<const double>(&v, 1), bt);
    std::ostringstream os;
    write_sweep_csv(os, rep);
    return std::make_pair(rep, os.str());
  };
  auto [r1, s1] = run(1);
  auto [r2, s2] = run(1);
  auto [r3, s3] = run(3);
  CHECK(s1 == s2);
  CHECK(s1 == s3);
  REQUIRE(r1.rows.size() == 2);
  CHECK(r1.rows[0].eps > r1.rows[1].eps);
  CHECK(r1.rows[0].lower_bound == doctest::Approx(0.2 * 0.25));
  CHECK(s1.rfind("eps,rate,rate_se,kv_rate,lower_bound,envelope,t_mix,c_emp\n", 0) == 0);

  SweepBudget nogrid = b;
  nogrid.grid_cells = 0;
  auto rn = residual_sweep(d, {0.2}, std::span<const double>(&v, 1), nogrid);
  CHECK(std::isnan(rn.rows[0].kv_rate));
  CHECK_THROWS_AS(residual_sweep(d, {0.0}, std::span<const double>(&v, 1), nogrid), Error);
}
