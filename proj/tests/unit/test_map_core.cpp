#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "resdiff/map_core.hpp"
#include "resdiff/map_io.hpp"
#include "resdiff/rational.hpp"

using namespace resdiff;

namespace {

double apply1(const PeriodicMap& m, double x) { return m.apply(std::span<const double>(&x, 1))[0]; }

BernoulliMap one_third_twice() {
  Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  return BernoulliMap(1, {make_cell({0.0}, 1.0 / 3.0, one, {0}), make_cell({1.0 / 3.0}, 1.0 / 3.0, one, {1})});
}

// All symbol tuples of length <= depth.
void for_each_tuple(std::size_t m, std::size_t depth, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> s;
  std::function<void()> rec = [&] {
    fn(s);
    if (s.size() == depth) return;
    for (std::size_t i = 0; i < m; ++i) {
      s.push_back(static_cast<int>(i));
      rec();
      s.pop_back();
    }
  };
  rec();
}

}  // namespace

TEST_CASE("builtin maps satisfy every structural check") {
  for (auto map : {maps::doubling(), maps::asymmetric(), maps::quadrant(), maps::confined_doubling()}) {
    auto r = validate_map(map);
    CHECK(r.ok());
    for (const auto& item : r.items) CHECK_MESSAGE(item.pass, item.name << ": " << item.detail);
  }
}

TEST_CASE("two thirds of the cube is a volume deficit") {
  auto r = validate_map(one_third_twice());
  CHECK_FALSE(r.ok());
  CHECK(r.has(ErrorCode::VolumeDeficit));
}

TEST_CASE("overlapping, non-orthogonal and wrong-target cells are reported") {
  Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  BernoulliMap overlap(1, {make_cell({0.0}, 0.5, one, {0}), make_cell({0.25}, 0.5, one, {1}), make_cell({0.75}, 0.25, one, {1})});
  CHECK(validate_map(overlap).has(ErrorCode::OverlappingCells));

  Eigen::MatrixXd stretch = 2.0 * Eigen::MatrixXd::Identity(1, 1);
  BernoulliMap skew(1, {make_cell({0.0}, 0.5, stretch, {0}), make_cell({0.5}, 0.5, one, {1})});
  CHECK(validate_map(skew).has(ErrorCode::NonOrthogonalMatrix));

  auto cells = maps::doubling().cells();
  cells[1].offset[0] += 0.25;  // branch no longer lands on a whole cube
  BernoulliMap shifted(1, cells);
  CHECK(validate_map(shifted).has(ErrorCode::TargetCubeMismatch));
}

TEST_CASE("apply on the doubling and asymmetric maps") {
  auto d = maps::doubling();
  CHECK(apply1(d, 0.3) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(apply1(d, 4.0 / 3.0) == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
  auto a = maps::asymmetric();
  CHECK(apply1(a, 0.5) == doctest::Approx(1.25).epsilon(1e-15));
  // half-open cells: the left endpoint of E_2 belongs to E_2
  CHECK(apply1(d, 0.5) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("jacobian determinant is 1 / |E_i| and within the volume bounds") {
  auto d = maps::doubling();
  auto a = maps::asymmetric();
  double x = 0.3;
  CHECK(jacobian_det(d, std::span<const double>(&x, 1)) == doctest::Approx(2.0));
  x = 0.1;
  CHECK(jacobian_det(a, std::span<const double>(&x, 1)) == doctest::Approx(3.0));
  x = 0.5;
  CHECK(jacobian_det(a, std::span<const double>(&x, 1)) == doctest::Approx(1.5));
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    double y = u(gen);
    double j = jacobian_det(a, std::span<const double>(&y, 1));
    CHECK(j >= 1.0 / a.max_volume() - 1e-12);
    CHECK(j <= 1.0 / a.min_volume() + 1e-12);
  }
}

TEST_CASE("expansion time") {
  auto d = maps::doubling();
  auto a = maps::asymmetric();
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    double x = u(gen);
    CHECK(theta_eps(d, std::span<const double>(&x, 1), 0.1) == 4);
    CHECK(theta_eps(a, std::span<const double>(&x, 1), 1.0) == 0);
    // two-sided bound
    for (double eps : {0.3, 0.1, 0.01}) {
      auto t = static_cast<double>(theta_eps(a, std::span<const double>(&x, 1), eps));
      CHECK(t >= std::log(eps) / std::log(1.0 / 3.0) - 1e-12);
      CHECK(t < std::log(eps) / std::log(2.0 / 3.0) + 1.0);
    }
  }
  double zero = 0.0;
  CHECK(theta_eps(a, std::span<const double>(&zero, 1), 0.1) == 3);
  CHECK_THROWS_AS(theta_eps(a, std::span<const double>(&zero, 1), 0.0), Error);
}

TEST_CASE("mean expansion time") {
  auto d = maps::doubling();
  auto tb = theta_bar(d, 0.1, ThetaMode::Exact);
  REQUIRE(tb.exact);
  CHECK(*tb.exact == Rational(4));
  CHECK(theta_bar(d, 1.0, ThetaMode::Exact).value == 0.0);

  auto a = maps::asymmetric();
  auto ta = theta_bar(a, 0.1, ThetaMode::Exact);
  CHECK(ta.value >= 2.0959);
  CHECK(ta.value < 6.679);
  // brute force: average theta over a fine midpoint grid
  const int n = 200'000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = (i + 0.5) / n;
    sum += static_cast<double>(theta_eps(a, std::span<const double>(&x, 1), 0.1));
  }
  CHECK(ta.value == doctest::Approx(sum / n).epsilon(1e-3));

  ThetaBarOptions opts;
  opts.samples = 50'000;
  auto mc = theta_bar(a, 0.1, ThetaMode::MonteCarlo, opts);
  CHECK(std::abs(mc.value - ta.value) <= 4.0 * mc.error);

  ThetaBarOptions tiny;
  tiny.node_budget = 10;
  CHECK_THROWS_AS(theta_bar(a, 1e-3, ThetaMode::Exact, tiny), Error);
}

TEST_CASE("cylinder geometry") {
  auto d = maps::doubling();
  std::vector<int> s1{0};
  auto c1 = cylinder_geometry(d, {0}, s1);
  CHECK(c1.lower[0] == 0.0);
  CHECK(c1.side == 0.5);
  std::vector<int> s2{1, 0};
  auto c2 = cylinder_geometry(d, {0}, s2);
  CHECK(c2.lower[0] == doctest::Approx(0.5));
  CHECK(c2.side == doctest::Approx(0.25));
  CHECK(jump_cube(d, {0}, s2) == LatticeVec{1});
  auto c0 = cylinder_geometry(d, {3}, {});
  CHECK(c0.lower[0] == 3.0);
  CHECK(c0.side == 1.0);
  std::vector<int> bad{2};
  CHECK_THROWS_AS(cylinder_geometry(d, {0}, bad), Error);
}

TEST_CASE("cylinder recursion and translation covariance over all short tuples") {
  for (auto map : {maps::doubling(), maps::asymmetric()}) {
    for_each_tuple(map.num_cells(), 6, [&](const std::vector<int>& s) {
      if (s.empty()) return;
      auto c = cylinder_geometry(map, {0}, s);
      auto [k2, s2] = cylinder_shift(map, {0}, s);
      auto next = cylinder_geometry(map, k2, s2);
      CHECK(next.side == doctest::Approx(c.side / map.cell(static_cast<std::size_t>(s[0])).side).epsilon(1e-13));
      auto moved = cylinder_geometry(map, {-2}, s);
      CHECK(moved.lower[0] == doctest::Approx(c.lower[0] - 2.0).epsilon(1e-14));
      // phi maps the cylinder interior onto the shifted cylinder
      double mid = c.lower[0] + 0.5 * c.side;
      double img = apply1(map, mid);
      CHECK(next.contains(std::span<const double>(&img, 1)));
    });
  }
}

TEST_CASE("S_eps enumeration and location") {
  auto d = maps::doubling();
  auto cells = enumerate_s_eps(d, 0.3);
  CHECK(cells.size() == 4);
  double total = 0.0;
  for (const auto& c : cells) {
    CHECK(c.side == doctest::Approx(0.25));
    total += c.volume();
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(enumerate_s_eps(d, 0.6).size() == 2);

  double x = 0.6;
  auto loc = locate_cylinder(d, std::span<const double>(&x, 1), 0.3);
  CHECK(loc.cube == LatticeVec{0});
  CHECK(loc.symbols == std::vector<int>{1, 0});

  auto a = maps::asymmetric();
  auto parts = enumerate_s_eps(a, 0.05);
  total = 0.0;
  double cursor = 0.0;
  for (const auto& c : parts) {
    total += c.volume();
    CHECK(c.lower[0] == doctest::Approx(cursor).epsilon(1e-12));  // lexicographic order tiles [0,1) left to right
    cursor = c.lower[0] + c.side;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("expansion time equals the depth of the located cylinder of phi(x)") {
  auto a = maps::asymmetric();
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    double x = u(gen);
    for (double eps : {0.1, 0.02}) {
      double y = apply1(a, x);
      auto loc = locate_cylinder(a, std::span<const double>(&y, 1), eps);
      CHECK(theta_eps(a, std::span<const double>(&x, 1), eps) == loc.symbols.size());
    }
  }
}

TEST_CASE("periodic displacement is exact") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> k(-50, 50);
  for (auto map : {maps::doubling(), maps::asymmetric()}) {
    for (int i = 0; i < 1000; ++i) {
      // dyadic points keep x + k exact in floating point
      double x = std::ldexp(std::floor(u(gen) * 1048576.0), -20);
      double n = k(gen);
      CHECK(apply1(map, x + n) - n == apply1(map, x));
    }
  }
}

TEST_CASE("Lebesgue measure is preserved modulo the lattice") {
  auto a = maps::asymmetric();
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int bins = 64, n = 1'000'000;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) {
    double y = apply1(a, u(gen));
    double f = y - std::floor(y);
    counts[static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(f * bins)))]++;
  }
  const double expect = static_cast<double>(n) / bins;
  const double sigma = std::sqrt(expect * (1.0 - 1.0 / bins));
  for (int c : counts) CHECK(std::abs(c - expect) <= 4.0 * sigma);
}

TEST_CASE("map files round trip and invalid files are refused") {
  auto d = maps::doubling();
  auto back = load_map_json(map_to_json(d, "doubling"));
  REQUIRE(back.num_cells() == 2);
  CHECK(back.cell(1).target == LatticeVec{1});
  CHECK(apply1(back, 0.7) == apply1(d, 0.7));
  CHECK_THROWS_AS(load_map_json("{\"dimension\": 1, \"cells\": [], \"colour\": 3}"), Error);
  CHECK_THROWS_AS(load_map_json("{not json"), Error);
  const char* deficit = R"({"dimension": 1, "cells": [
    {"corner": [0.0], "side": 0.3333333333333333, "target_cube": [0]},
    {"corner": [0.3333333333333333], "side": 0.3333333333333333, "target_cube": [1]}]})";
  try {
    load_map_json(deficit);
    FAIL("invalid map accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VolumeDeficit);
  }
  CHECK(builtin_map("quadrant").dim() == 2);
}
