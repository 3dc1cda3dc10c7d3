#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "resdiff/errors.hpp"
#include "resdiff/map_core.hpp"
#include "resdiff/torus_transfer.hpp"

using namespace resdiff;

namespace {

DisplacementKernel coin(std::vector<std::pair<std::int64_t, double>> law) {
  std::vector<DisplacementKernel::Entry> row;
  for (auto [j, p] : law) row.push_back({0, {j}, p});
  return DisplacementKernel::from_rows(1, {{0.5}}, {row});
}

}  // namespace

TEST_CASE("grid indexing") {
  UlamGrid g(2, 8);
  CHECK(g.size() == 64);
  Point u{0.3, 0.8};
  CHECK(g.index_of(u) == 2 + 8 * 6);
  auto c = g.center(50);
  CHECK(c[0] == doctest::Approx(0.3125));
  CHECK(c[1] == doctest::Approx(0.8125));
  CHECK_THROWS_AS(UlamGrid(1, 4), Error);
}

TEST_CASE("Ulam kernel rows are stochastic and columns nearly so") {
  auto d = maps::doubling();
  const std::size_t G = 256;
  auto k = build_displacement_kernel(d, 0.1, UlamGrid(1, G));
  CHECK(k.max_row_error() < 1e-10);
  auto cols = k.column_sums();
  CHECK((cols.array() - 1.0).abs().maxCoeff() < 5.0 / G);
  auto drift = k.drift();
  CHECK(drift.rows() == static_cast<long>(G));

  auto a = maps::asymmetric();
  auto ka = build_displacement_kernel(a, 0.05, UlamGrid(1, G));
  CHECK(ka.max_row_error() < 1e-10);
  CHECK((ka.column_sums().array() - 1.0).abs().maxCoeff() < 5.0 / G);
}

TEST_CASE("large noise gives a nearly uniform torus chain") {
  auto k = build_displacement_kernel(maps::doubling(), 3.0, UlamGrid(1, 64));
  auto p = k.dense_torus_matrix();
  CHECK((p.array() - 1.0 / 64).abs().maxCoeff() * 64 < 1e-6);
  CHECK(mixing_time(k).time == 1);
}

TEST_CASE("mixing time modes agree and distances decrease") {
  auto k = build_displacement_kernel(maps::doubling(), 0.05, UlamGrid(1, 256));
  MixingOptions dense, matvec;
  matvec.mode = MixingMode::MatVec;
  auto a = mixing_time(k, dense);
  auto b = mixing_time(k, matvec);
  CHECK(a.time == b.time);
  CHECK(a.time >= 1);
  for (std::size_t i = 1; i < a.distance.size(); ++i) CHECK(a.distance[i] <= a.distance[i - 1] + 1e-12);
  CHECK(a.distance.back() < 0.5);
  if (a.time > 1) CHECK(a.distance[a.time - 2] >= 0.5);
}

TEST_CASE("doubling drift and corrector") {
  auto k = build_displacement_kernel(maps::doubling(), 0.1, UlamGrid(1, 256));
  auto lin = corrector_solve(k, CorrectorMode::Linear);
  auto ser = corrector_solve(k, CorrectorMode::Series);
  CHECK(lin.drift_mean[0] == doctest::Approx(0.5).epsilon(2.0 / 256));
  CHECK(lin.residual < 1e-10);
  CHECK(ser.residual < 1e-10);
  CHECK((lin.chi - ser.chi).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(std::abs(lin.stationary.dot(lin.chi.col(0))) < 1e-12);
  double v = 1.0;
  double r1 = kv_rate(k, lin, std::span<const double>(&v, 1));
  double r2 = kv_rate(k, ser, std::span<const double>(&v, 1));
  CHECK(r1 == doctest::Approx(r2).epsilon(1e-8));
  CHECK(r1 > 0.0);
}

TEST_CASE("translation map has a vanishing corrector") {
  TranslationMap t({0.25});
  auto k = build_displacement_kernel(t, 0.1, UlamGrid(1, 64));
  auto c = corrector_solve(k, CorrectorMode::Linear);
  CHECK(c.drift_mean[0] == doctest::Approx(0.25).epsilon(1e-10));
  CHECK(c.chi.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("lattice walks with a single state") {
  double v = 1.0;
  auto pm = coin({{-1, 0.5}, {1, 0.5}});
  auto c = corrector_solve(pm, CorrectorMode::Linear);
  CHECK(kv_rate(pm, c, std::span<const double>(&v, 1)) == doctest::Approx(1.0).epsilon(1e-14));
  auto plus = coin({{1, 1.0}});
  auto cp = corrector_solve(plus, CorrectorMode::Linear);
  CHECK(cp.drift_mean[0] == doctest::Approx(1.0));
  CHECK(kv_rate(plus, cp, std::span<const double>(&v, 1)) == doctest::Approx(0.0));
}

TEST_CASE("covariance decay inequality") {
  auto k = build_displacement_kernel(maps::asymmetric(), 0.1, UlamGrid(1, 128));
  double v = 1.0;
  for (std::size_t m : {0, 3}) {
    for (std::size_t n : {0, 1, 2, 5, 10}) {
      for (std::size_t g : {0, 17, 100}) {
        auto c = cov_decay_check(k, m, n, std::span<const double>(&v, 1), g);
        CHECK_MESSAGE(c.holds(), "m=" << m << " n=" << n << " g=" << g << " lhs=" << c.lhs << " rhs=" << c.rhs);
      }
    }
  }
  CHECK(sup_second_moment(k) > 0.0);
}

TEST_CASE("stationary law of a doubly stochastic chain is uniform") {
  auto k = build_displacement_kernel(maps::doubling(), 0.1, UlamGrid(1, 128));
  auto pi = stationary_distribution(k);
  CHECK(pi.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((pi.array() - 1.0 / 128).abs().maxCoeff() < 0.05 / 128);
}

TEST_CASE("grid refinement changes the rate by less than 5 percent") {
  double v = 1.0;
  auto rate = [&](std::size_t G) {
    auto k = build_displacement_kernel(maps::doubling(), 0.1, UlamGrid(1, G));
    return kv_rate(k, corrector_solve(k, CorrectorMode::Linear), std::span<const double>(&v, 1));
  };
  double a = rate(256), b = rate(512);
  CHECK(std::abs(a - b) / b < 0.05);
}

TEST_CASE("kernel export round trips") {
  auto k = build_displacement_kernel(maps::quadrant(), 0.2, UlamGrid(2, 8));
  CHECK(k.max_row_error() < 1e-10);
  std::stringstream ss;
  write_kernel_binary(ss, k);
  auto back = read_kernel_binary(ss);
  CHECK(back.states == k.states);
  CHECK(back.dim == 2);
  CHECK(back.probs == k.probs);
  CHECK(back.jumps == k.jumps);
  CHECK(back.cols == k.cols);
  CHECK(back.centers == k.centers);

  std::stringstream t;
  write_kernel_triplets(t, k);
  std::size_t lines = 0;
  for (std::string line; std::getline(t, line);) ++lines;
  CHECK(lines == k.nnz());

  std::stringstream junk("RDKERN00xxxxxxxx");
  CHECK_THROWS_AS(read_kernel_binary(junk), Error);
}
